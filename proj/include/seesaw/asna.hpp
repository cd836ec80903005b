#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "seesaw/tensor.hpp"

namespace seesaw {

using NamedTensor = std::pair<std::string, Tensor>;

/// Uniform in [-limit, limit] with limit = sqrt(6 / (rows + cols)).
Tensor xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng);
/// Uniform in [0, 1) from the top 53 bits of one engine draw.
double uniform01(std::mt19937_64& rng);

struct FeedForwardParams {
    Tensor w1, b1;  // [D, D_ff], [D_ff]
    Tensor w2, b2;  // [D_ff, D], [D]
};

struct LayerNormParams {
    Tensor gain, bias;  // [D], [D]
};

/// Weights of one ASNA block.
///
/// Projection matrices are D x D with head h owning columns
/// [h * d_h, (h + 1) * d_h). Values come from the stationary stream only.
struct AsnaParams {
    std::size_t d_model = 0;
    std::size_t heads = 0;
    std::size_t d_ff = 0;
    double dropout = 0.0;

    Tensor wq_sta, wk_sta;
    Tensor wq_non, wk_non;
    Tensor wv, wo;
    Tensor wg, bg;  // [2D, heads], [heads]
    FeedForwardParams ffn_sta, ffn_non;
    LayerNormParams norm_attn, norm_sta, norm_non;

    static AsnaParams init(std::size_t d_model, std::size_t heads, std::size_t d_ff, double dropout,
                           std::mt19937_64& rng);

    std::size_t head_dim() const { return d_model / heads; }

    /// Every parameter tensor with a stable name relative to the block.
    std::vector<NamedTensor> named() const;
};

/// How the branch gate is produced.
enum class GateMode {
    learned,          // sigmoid(Linear(z_sta ++ z_non))
    stationary_only,  // G == 0
    nonstationary_only,  // G == 1
    fixed_half,       // G == 0.5
};

struct AsnaDiagnostics {
    Tensor a_sta;  // [..., heads, T, T]
    Tensor a_non;  // [..., heads, T, T]
    Tensor gate;   // [..., T, heads], weight on the non-stationary branch
};

struct AsnaOutput {
    Tensor z_sta;  // [..., T, D]
    Tensor z_non;  // [..., T, D]
    std::optional<AsnaDiagnostics> diag;
};

struct AsnaOptions {
    bool train = false;
    GateMode gate = GateMode::learned;
    bool capture = false;
    std::mt19937_64* rng = nullptr;  // required when train && dropout > 0
};

/// Per-head softmax((z Wq_h)(z Wk_h)^T / sqrt(d_h)): [..., T, D] -> [..., heads, T, T].
Tensor branch_scores(const Tensor& z, const Tensor& w_q, const Tensor& w_k, std::size_t heads);

/// sigmoid((z_sta ++ z_non) W_g + b_g): [..., T, heads]. Entry (t, h) scales
/// query row t of head h.
Tensor compute_gate(const Tensor& z_sta, const Tensor& z_non, const Tensor& w_g, const Tensor& b_g);

/// Fused mixing matrix per head: (1 - G) * A_sta + G * A_non, broadcast over keys.
Tensor fuse_scores(const Tensor& a_sta, const Tensor& a_non, const Tensor& gate);

/// Attention output from the fused scores, values projected from z_sta,
/// heads merged and projected by w_o: [..., T, D].
Tensor fused_attention(const Tensor& a_sta, const Tensor& a_non, const Tensor& gate, const Tensor& z_sta,
                       const Tensor& w_v, const Tensor& w_o, std::size_t heads);

/// Full block: fused attention, then the residual/FFN/LayerNorm updates of
/// both streams. Inputs are [..., T, D]; leading axes are independent sequences.
AsnaOutput asna_forward(const Tensor& z_sta, const Tensor& z_non, const AsnaParams& params,
                        const AsnaOptions& options = {});

}  // namespace seesaw
