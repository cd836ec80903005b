#pragma once

#include <cstddef>

#include "seesaw/tensor.hpp"

namespace seesaw {

struct PatchConfig {
    std::size_t patch_len = 16;
    std::size_t stride = 8;
    std::size_t embed_dim = 64;

    /// Throws UsageError unless 1 <= stride <= patch_len <= seq_len.
    void validate(std::size_t seq_len) const;
};

/// Patches per channel: floor((L - P) / S) + 2. The series is padded on the
/// right with S copies of its last value, which always adds one window.
std::size_t patch_count(std::size_t seq_len, std::size_t patch_len, std::size_t stride);

/// [..., L] -> [..., N, P]. Window i covers padded positions [iS, iS + P).
Tensor patchify(const Tensor& x, std::size_t patch_len, std::size_t stride);

struct PatchTokens {
    Tensor values;  // [..., N, D]
    std::size_t n_patches = 0;
};

/// tokens[..., n, :] = patches[..., n, :] * w_e + pos[n, :]
/// with w_e [P, D] and pos [N, D].
PatchTokens embed(const Tensor& patches, const Tensor& w_e, const Tensor& pos);

}  // namespace seesaw
