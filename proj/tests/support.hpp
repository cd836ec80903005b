#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "oracles/oracles.hpp"
#include "seesaw/asna.hpp"
#include "seesaw/tensor.hpp"

namespace testing {

inline seesaw::Tensor random_tensor(seesaw::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                                    bool requires_grad = false) {
    std::vector<double> v(seesaw::shape_numel(shape));
    for (auto& x : v) x = lo + (hi - lo) * seesaw::uniform01(rng);
    return seesaw::Tensor(std::move(shape), std::move(v), requires_grad);
}

inline oracle::Mat to_mat(const seesaw::Tensor& t) {
    oracle::Mat m(t.dim(0), t.dim(1));
    std::copy(t.data().begin(), t.data().end(), m.v.begin());
    return m;
}

inline oracle::Mat to_mat(std::span<const double> data, std::size_t rows, std::size_t cols) {
    oracle::Mat m(rows, cols);
    std::copy_n(data.begin(), rows * cols, m.v.begin());
    return m;
}

inline std::vector<double> to_vec(const seesaw::Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline oracle::AsnaWeights to_oracle(const seesaw::AsnaParams& p) {
    oracle::AsnaWeights w;
    w.heads = p.heads;
    w.wq_sta = to_mat(p.wq_sta);
    w.wk_sta = to_mat(p.wk_sta);
    w.wq_non = to_mat(p.wq_non);
    w.wk_non = to_mat(p.wk_non);
    w.wv = to_mat(p.wv);
    w.wo = to_mat(p.wo);
    w.wg = to_mat(p.wg);
    w.bg = to_vec(p.bg);
    w.ffn_sta = {to_mat(p.ffn_sta.w1), to_mat(p.ffn_sta.w2), to_vec(p.ffn_sta.b1), to_vec(p.ffn_sta.b2)};
    w.ffn_non = {to_mat(p.ffn_non.w1), to_mat(p.ffn_non.w2), to_vec(p.ffn_non.b1), to_vec(p.ffn_non.b2)};
    w.norm_attn = {to_vec(p.norm_attn.gain), to_vec(p.norm_attn.bias)};
    w.norm_sta = {to_vec(p.norm_sta.gain), to_vec(p.norm_sta.bias)};
    w.norm_non = {to_vec(p.norm_non.gain), to_vec(p.norm_non.bias)};
    return w;
}

/// Randomizes every parameter of an ASNA block (including norms and biases)
/// so that no weight sits at a special value.
inline void perturb(seesaw::AsnaParams& p, std::mt19937_64& rng, double amount = 0.3) {
    for (auto& [_, t] : p.named()) {
        seesaw::Tensor h = t;
        for (auto& x : h.mutable_data()) x += amount * (2.0 * seesaw::uniform01(rng) - 1.0);
    }
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

/// Compares tape gradients of `loss` against central differences for every
/// entry of every tensor in `params` (leaves created with requires_grad).
inline GradCheck gradient_check(const std::function<seesaw::Tensor()>& loss, std::vector<seesaw::Tensor> params,
                                double step = 1e-4, double floor = 1e-6) {
    for (auto& p : params) p.zero_grad();
    seesaw::backward(loss());
    GradCheck out;
    for (auto& p : params) {
        std::vector<double> analytic(p.numel(), 0.0);
        if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
        const auto numeric = oracle::finite_difference_grad(
            [&] {
                seesaw::NoGradGuard g;
                return loss().item();
            },
            p.mutable_data(), step);
        for (std::size_t i = 0; i < numeric.size(); ++i)
            out.max_rel_error = std::max(out.max_rel_error, oracle::relative_error(analytic[i], numeric[i], floor));
        out.checked += numeric.size();
    }
    return out;
}

}  // namespace testing
