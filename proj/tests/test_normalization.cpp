#include <doctest.h>

#include <random>

#include "support.hpp"
#include "seesaw/normalization.hpp"

using namespace seesaw;
using testing::random_tensor;

TEST_SUITE("normalization") {

TEST_CASE("constant channel normalizes to zero with clamped std") {
    const NormalizedInput n = in_norm(Tensor({1, 4}, {5, 5, 5, 5}));
    for (double v : n.x_sta.data()) CHECK(v == 0.0);
    CHECK(n.stats.std.at({0}) == kNormStdFloor);
    CHECK(n.stats.mean.at({0}) == 5.0);
}

TEST_CASE("hand example [1, 3]") {
    const NormalizedInput n = in_norm(Tensor({1, 2}, {1, 3}));
    CHECK(n.stats.mean.at({0}) == 2.0);
    CHECK(n.stats.std.at({0}) == 1.0);
    CHECK(n.x_sta.at({0, 0}) == -1.0);
    CHECK(n.x_sta.at({0, 1}) == 1.0);
}

TEST_CASE("standardized input is a fixed point") {
    std::mt19937_64 rng(1);
    const Tensor x = in_norm(random_tensor({3, 20}, rng, -10, 10)).x_sta;
    const Tensor y = in_norm(x).x_sta;
    CHECK(testing::max_abs_diff(x.data(), y.data()) < 1e-9);
}

TEST_CASE("output moments") {
    std::mt19937_64 rng(2);
    const Tensor x = random_tensor({4, 33}, rng, -50, 80);
    const Tensor z = in_norm(x).x_sta;
    const Tensor m = mean_last(z), v = variance_last(z);
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(std::abs(m.at({c})) < 1e-9);
        CHECK(std::abs(v.at({c}) - 1.0) < 1e-6);
    }
}

TEST_CASE("denorm hand example and zeros") {
    NormStats s{Tensor({1}, {2.0}), Tensor({1}, {3.0})};
    const Tensor y = in_denorm(Tensor({1, 2}, {1, -1}), s);
    CHECK(y.at({0, 0}) == 5.0);
    CHECK(y.at({0, 1}) == -1.0);
    NormStats s2{Tensor({2}, {4.0, -1.5}), Tensor({2}, {2.0, 0.5})};
    const Tensor z = in_denorm(Tensor::zeros({2, 3}), s2);
    for (std::size_t t = 0; t < 3; ++t) {
        CHECK(z.at({0, t}) == 4.0);
        CHECK(z.at({1, t}) == -1.5);
    }
    CHECK_THROWS_AS(in_denorm(Tensor::zeros({3, 2}), s2), DimensionError);
}

TEST_CASE("short input is rejected") { CHECK_THROWS_AS(in_norm(Tensor({2, 1}, {1, 2})), UsageError); }

TEST_CASE("property: roundtrip is the identity, including constant channels") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t c = 1 + rng() % 4, l = 2 + rng() % 30;
        Tensor x = random_tensor({c, l}, rng, -100, 100);
        if (trial % 3 == 0) {
            std::vector<double> v(x.data().begin(), x.data().end());
            std::fill_n(v.begin(), l, 7.25);  // constant first channel
            x = Tensor({c, l}, v);
        }
        const NormalizedInput n = in_norm(x);
        const Tensor back = in_denorm(n.x_sta, n.stats);
        CHECK(testing::max_abs_diff(back.data(), x.data()) < 1e-9);
    }
}

TEST_CASE("property: affine invariance of the normalized output") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t c = 1 + rng() % 4, l = 2 + rng() % 30;
        const Tensor x = random_tensor({c, l}, rng, -5, 5);
        const Tensor a = random_tensor({c}, rng, 0.1, 20);
        const Tensor b = random_tensor({c}, rng, -100, 100);
        const Tensor y = add_rows(mul_rows(x, a), b);
        CHECK(testing::max_abs_diff(in_norm(x).x_sta.data(), in_norm(y).x_sta.data()) < 1e-7);
    }
}

TEST_CASE("statistics are constants of the instance") {
    Tensor x({1, 3}, {1.0, 2.0, 4.0}, true);
    const NormalizedInput n = in_norm(x);
    CHECK_FALSE(n.stats.mean.requires_grad());
    CHECK_FALSE(n.stats.std.requires_grad());
    backward(sum(n.x_sta));
    // d/dx of sum((x - m) / s) with m, s held fixed is 1/s per entry.
    for (double g : x.grad()) CHECK(std::abs(g - 1.0 / n.stats.std.item()) < 1e-15);
}

}  // TEST_SUITE
