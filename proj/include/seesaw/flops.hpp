#pragma once

#include <cstddef>
#include <string>

#include "seesaw/model.hpp"

namespace seesaw {

/// Analytic attention FLOP counts derived from shapes.
///
/// Counting rules, per attention call over T tokens with width D and h
/// heads (d_h = D / h):
///   - an m x k by k x n matrix product costs 2 m k n;
///   - scaling scores by 1/sqrt(d_h) costs 1 per score, softmax 4 per score
///     (max-subtract, exp, sum, divide);
///   - gated fusion costs 3 per score ((1-G) A_sta + G A_non) plus 1 per
///     query row and head for 1 - G;
///   - a bias add costs 1 per output, a sigmoid 4 per output.
/// "score" covers every term that grows with T^2 before the value product:
/// Q K^T, scaling, softmax and, for ASNA, fusion. "projection" covers the
/// Q/K/V/O (and gate) linear maps, "aggregation" the score-times-value
/// product. Feed-forward and normalization layers are not counted.
struct AttentionFlops {
    double score = 0.0;
    double projection = 0.0;
    double aggregation = 0.0;

    double total() const { return score + projection + aggregation; }
    AttentionFlops& operator+=(const AttentionFlops& o);
};

AttentionFlops single_branch_flops(std::size_t tokens, std::size_t d_model, std::size_t heads);
AttentionFlops asna_flops(std::size_t tokens, std::size_t d_model, std::size_t heads);

struct ModelFlops {
    AttentionFlops asna_patch, asna_channel;
    AttentionFlops single_patch, single_channel;

    AttentionFlops asna_total() const;
    AttentionFlops single_total() const;
    /// ASNA score FLOPs over single-branch score FLOPs for the whole model.
    double score_ratio() const;
};

/// Per forecast instance, summed over all patch and channel layers of the
/// configured architecture.
ModelFlops count_model_flops(const ModelConfig& cfg);

}  // namespace seesaw
