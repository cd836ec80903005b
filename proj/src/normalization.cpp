#include "seesaw/normalization.hpp"

#include <algorithm>
#include <cmath>

namespace seesaw {

NormalizedInput in_norm(const Tensor& x) {
    if (x.rank() == 0 || x.dim(-1) < 2)
        throw UsageError("in_norm: need at least 2 time steps, got shape " + shape_str(x.shape()));
    const std::size_t len = x.dim(-1);
    const std::size_t rows = x.numel() / len;
    const auto xv = x.data();
    std::vector<double> mean(rows), stdev(rows), inv(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double m = 0.0;
        for (std::size_t t = 0; t < len; ++t) m += xv[r * len + t];
        m /= static_cast<double>(len);
        double var = 0.0;
        for (std::size_t t = 0; t < len; ++t) var += (xv[r * len + t] - m) * (xv[r * len + t] - m);
        var /= static_cast<double>(len);
        mean[r] = m;
        stdev[r] = std::max(std::sqrt(var), kNormStdFloor);
        inv[r] = 1.0 / stdev[r];
    }
    Shape stat_shape(x.shape().begin(), x.shape().end() - 1);
    NormStats stats{Tensor(stat_shape, mean), Tensor(stat_shape, stdev)};
    Tensor neg_mean(stat_shape, [&] {
        std::vector<double> v(mean);
        for (auto& m : v) m = -m;
        return v;
    }());
    Tensor x_sta = mul_rows(add_rows(x, neg_mean), Tensor(stat_shape, std::move(inv)));
    return {std::move(x_sta), std::move(stats)};
}

Tensor in_denorm(const Tensor& y, const NormStats& stats) {
    Shape expected(y.shape().begin(), y.shape().end() - (y.rank() ? 1 : 0));
    if (y.rank() == 0 || stats.mean.shape() != expected || stats.std.shape() != expected)
        throw DimensionError("in_denorm: stats " + shape_str(stats.mean.shape()) + " do not match output " +
                             shape_str(y.shape()));
    return add_rows(mul_rows(y, stats.std), stats.mean);
}

}  // namespace seesaw
