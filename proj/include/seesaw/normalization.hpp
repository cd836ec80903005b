#pragma once

#include "seesaw/tensor.hpp"

namespace seesaw {

inline constexpr double kNormStdFloor = 1e-5;

/// Per-row statistics of an input window, shaped like the input minus its
/// time axis (e.g. [C] for a C x L instance, [B, C] for a batch).
struct NormStats {
    Tensor mean;
    Tensor std;  // population std, clamped to kNormStdFloor
};

struct NormalizedInput {
    Tensor x_sta;
    NormStats stats;
};

/// Reversible instance normalization along the last (time) axis.
///
/// Statistics are treated as constants of the instance: no gradient flows
/// back through them. Requires at least two time steps.
NormalizedInput in_norm(const Tensor& x);

/// y * std + mean, row-wise. The stats must describe the leading axes of y.
Tensor in_denorm(const Tensor& y, const NormStats& stats);

}  // namespace seesaw
