#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles/oracles.hpp"

TEST_SUITE("oracles") {

TEST_CASE("finite differences") {
    std::vector<double> w{3.0};
    const auto g = oracle::finite_difference_grad([&] { return w[0] * w[0]; }, w);
    CHECK(std::abs(g[0] - 6.0) < 1e-6);
    CHECK(w[0] == 3.0);

    std::vector<double> v{1.0, -2.0, 0.5};
    const auto lin = oracle::finite_difference_grad([&] { return 2.0 * v[0] - 3.0 * v[1] + 0.25 * v[2]; }, v);
    CHECK(std::abs(lin[0] - 2.0) < 1e-10);
    CHECK(std::abs(lin[1] + 3.0) < 1e-10);
    CHECK(std::abs(lin[2] - 0.25) < 1e-10);
}

TEST_CASE("uniform attention for identical tokens") {
    oracle::Mat z(3, 4), wq(4, 4), wk(4, 4);
    for (auto& x : z.v) x = 0.7;
    for (std::size_t i = 0; i < 16; ++i) {
        wq.v[i] = 0.1 * static_cast<double>(i);
        wk.v[i] = -0.05 * static_cast<double>(i);
    }
    for (const auto& a : oracle::branch_scores(z, wq, wk, 2))
        for (double x : a.v) CHECK(std::abs(x - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("naive dft of a constant") {
    const std::vector<double> x(6, 2.0);
    const auto f = oracle::naive_dft(x);
    CHECK(f.size() == 4);
    CHECK(std::abs(f[0].real() - 12.0) < 1e-12);
    for (std::size_t k = 1; k < 4; ++k) CHECK(std::abs(f[k]) < 1e-12);
}

TEST_CASE("scalar adam reaches the minimum") {
    const double w = oracle::scalar_adam([](double v) { return 2.0 * (v - 3.0); }, 0.0, 0.1, 100);
    CHECK(std::abs(w - 3.0) < 0.1);
}

}  // TEST_SUITE
