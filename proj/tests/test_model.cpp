#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "support.hpp"
#include "seesaw/model.hpp"
#include "seesaw/training.hpp"

using namespace seesaw;
using testing::random_tensor;

namespace {

ModelConfig tiny(std::size_t channels = 2, Ablation ablation = Ablation::full) {
    ModelConfig c;
    c.channels = channels;
    c.seq_len = 16;
    c.pred_len = 4;
    c.patch_len = 4;
    c.stride = 4;
    c.d_model = 8;
    c.heads = 2;
    c.dropout = 0.0;
    c.patch_layers = 1;
    c.channel_layers = 1;
    c.n_prime = 2;
    c.ablation = ablation;
    c.seed = 11;
    return c;
}

// Independent count of trainable scalars.
std::size_t expected_parameters(const ModelConfig& c) {
    const std::size_t d = c.d_model, f = c.d_ff ? c.d_ff : 4 * d, h = c.heads;
    const std::size_t n = (c.seq_len - c.patch_len) / c.stride + 2;
    const std::size_t np = c.n_prime ? c.n_prime : (n + 1) / 2;
    const std::size_t block = 6 * d * d + 2 * d * h + h + 2 * (2 * d * f + f + d) + 3 * 2 * d;
    const bool pd = c.ablation != Ablation::no_pd, cr = c.ablation != Ablation::no_cr;
    std::size_t total = 2 * (c.patch_len * d + n * d);
    if (pd) total += c.patch_layers * block;
    if (cr) total += 2 * np * n + c.channel_layers * block;
    total += (cr ? np : n) * d * c.pred_len + c.pred_len;
    return total;
}

void zero_all(SeesawModel& m) {
    auto values = m.snapshot();
    for (auto& v : values) std::fill(v.begin(), v.end(), 0.0);
    m.load_values(values);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("forecast shape") {
    ModelConfig c = tiny(3);
    c.seq_len = 32;
    c.pred_len = 8;
    c.n_prime = 0;
    const SeesawModel m(c);
    std::mt19937_64 rng(1);
    CHECK(m.forward(random_tensor({3, 32}, rng)).y_hat.shape() == Shape{3, 8});
    CHECK(m.forward(random_tensor({5, 3, 32}, rng)).y_hat.shape() == Shape{5, 3, 8});
    CHECK_THROWS_AS(m.forward(random_tensor({2, 32}, rng)), UsageError);
    CHECK_THROWS_AS(m.forward(random_tensor({3, 31}, rng)), UsageError);
}

TEST_CASE("zero weights forecast the input mean") {
    for (Ablation a : all_ablations()) {
        SeesawModel m(tiny(3, a));
        zero_all(m);
        std::mt19937_64 rng(2);
        const Tensor x = random_tensor({3, 16}, rng, -10, 30);
        const Tensor y = m.forward(x).y_hat;
        for (std::size_t c = 0; c < 3; ++c) {
            double mean = 0.0;
            for (std::size_t t = 0; t < 16; ++t) mean += x.at({c, t});
            mean /= 16.0;
            for (std::size_t h = 0; h < 4; ++h) CHECK(std::abs(y.at({c, h}) - mean) < 1e-12);
        }
    }
}

TEST_CASE("parameter count formula") {
    ModelConfig a = tiny();
    ModelConfig b;
    b.channels = 4;
    ModelConfig c = tiny(3, Ablation::no_cr);
    c.d_ff = 12;
    c.patch_layers = 2;
    for (const ModelConfig& cfg : {a, b, c}) CHECK(SeesawModel(cfg).parameter_count() == expected_parameters(cfg));
    for (Ablation ab : all_ablations()) CHECK(SeesawModel(tiny(2, ab)).parameter_count() == expected_parameters(tiny(2, ab)));
    // Independent of the channel count: weights are shared across channels.
    CHECK(SeesawModel(tiny(1)).parameter_count() == SeesawModel(tiny(5)).parameter_count());
}

TEST_CASE("batched forward equals per-instance forward") {
    const SeesawModel m(tiny(2));
    std::mt19937_64 rng(3);
    const Tensor xb = random_tensor({3, 2, 16}, rng, -3, 3);
    const Tensor yb = m.forward(xb).y_hat;
    for (std::size_t i = 0; i < 3; ++i) {
        const Tensor yi = m.forward(reshape(slice(xb, 0, i, 1), {2, 16})).y_hat;
        CHECK(testing::max_abs_diff(yi.data(), yb.data().subspan(i * 8, 8)) < 1e-12);
    }
}

TEST_CASE("patch dependency layer is per-channel") {
    std::mt19937_64 rng(4);
    AsnaParams p = AsnaParams::init(4, 2, 8, 0.0, rng);
    testing::perturb(p, rng);
    const Tensor ps = random_tensor({3, 5, 4}, rng), pn = random_tensor({3, 5, 4}, rng);
    const auto [os, on] = patch_dependency_layer(ps, pn, p, {});

    // C = 1 is a single block call.
    const auto single = asna_forward(reshape(slice(ps, 0, 0, 1), {5, 4}), reshape(slice(pn, 0, 0, 1), {5, 4}), p);
    CHECK(testing::max_abs_diff(single.z_sta.data(), os.data().subspan(0, 20)) < 1e-13);

    // Perturbing channel 1 leaves channel 0 untouched.
    std::vector<double> moved(pn.data().begin(), pn.data().end());
    for (std::size_t i = 20; i < 40; ++i) moved[i] += 3.0;
    const auto [os2, on2] = patch_dependency_layer(ps, Tensor({3, 5, 4}, moved), p, {});
    CHECK(testing::max_abs_diff(os.data().subspan(0, 20), os2.data().subspan(0, 20)) == 0.0);
    CHECK(testing::max_abs_diff(on.data().subspan(0, 20), on2.data().subspan(0, 20)) == 0.0);

    // Channel permutation commutes with the layer.
    std::vector<double> sw_s(60), sw_n(60);
    const std::size_t order[3] = {2, 0, 1};
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < 20; ++k) {
            sw_s[c * 20 + k] = ps.data()[order[c] * 20 + k];
            sw_n[c * 20 + k] = pn.data()[order[c] * 20 + k];
        }
    const auto [ps3, pn3] = patch_dependency_layer(Tensor({3, 5, 4}, sw_s), Tensor({3, 5, 4}, sw_n), p, {});
    for (std::size_t c = 0; c < 3; ++c)
        CHECK(testing::max_abs_diff(ps3.data().subspan(c * 20, 20), os.data().subspan(order[c] * 20, 20)) < 1e-13);
}

TEST_CASE("temporal aggregation") {
    std::mt19937_64 rng(5);
    const Tensor p = random_tensor({2, 4, 3}, rng);
    std::vector<double> eye(16, 0.0);
    for (std::size_t i = 0; i < 4; ++i) eye[i * 5] = 1.0;
    CHECK(testing::to_vec(temporal_aggregate(p, Tensor({4, 4}, eye))) == testing::to_vec(p));

    const Tensor avg = temporal_aggregate(p, Tensor::full({1, 4}, 0.25));
    REQUIRE(avg.shape() == Shape{2, 1, 3});
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t d = 0; d < 3; ++d) {
            double m = 0.0;
            for (std::size_t n = 0; n < 4; ++n) m += p.at({c, n, d});
            CHECK(std::abs(avg.at({c, 0, d}) - m / 4.0) < 1e-15);
        }
    CHECK_THROWS_AS(temporal_aggregate(p, Tensor::zeros({2, 3})), DimensionError);

    Tensor w = random_tensor({2, 4}, rng, -1, 1, true);
    const auto r = testing::gradient_check([&] { return sum(square(temporal_aggregate(p, w))); }, {w});
    CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("channel relationship layer") {
    std::mt19937_64 rng(6);
    AsnaParams p = AsnaParams::init(4, 2, 8, 0.0, rng);
    testing::perturb(p, rng);

    // N' = 1: one block call over the C channel tokens.
    const Tensor qs = random_tensor({3, 1, 4}, rng), qn = random_tensor({3, 1, 4}, rng);
    const auto [os, on] = channel_relationship_layer(qs, qn, p, {});
    const auto single = asna_forward(reshape(qs, {3, 4}), reshape(qn, {3, 4}), p);
    CHECK(testing::max_abs_diff(single.z_sta.data(), os.data()) < 1e-13);
    CHECK(testing::max_abs_diff(single.z_non.data(), on.data()) < 1e-13);

    // Patches are independent.
    const Tensor ms = random_tensor({3, 2, 4}, rng), mn = random_tensor({3, 2, 4}, rng);
    std::optional<AsnaDiagnostics> diag;
    const auto [a, b] = channel_relationship_layer(ms, mn, p, {.capture = true}, &diag);
    REQUIRE(diag.has_value());
    CHECK(diag->a_sta.shape() == Shape{2, 2, 3, 3});
    std::vector<double> moved(ms.data().begin(), ms.data().end());
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t d = 0; d < 4; ++d) moved[c * 8 + 4 + d] += 1.5;  // patch 1 only
    const auto [a2, b2] = channel_relationship_layer(Tensor({3, 2, 4}, moved), mn, p, {});
    for (std::size_t c = 0; c < 3; ++c)
        CHECK(testing::max_abs_diff(a.data().subspan(c * 8, 4), a2.data().subspan(c * 8, 4)) == 0.0);

    // C = 1: attention is the trivial 1x1 matrix.
    std::optional<AsnaDiagnostics> d1;
    channel_relationship_layer(random_tensor({1, 3, 4}, rng), random_tensor({1, 3, 4}, rng), p, {.capture = true}, &d1);
    for (double v : d1->a_sta.data()) CHECK(v == 1.0);
    for (double v : d1->a_non.data()) CHECK(v == 1.0);
}

TEST_CASE("prediction head") {
    std::mt19937_64 rng(7);
    const Tensor w = random_tensor({6, 5}, rng);
    const Tensor zero_out = flatten_predict(Tensor::zeros({2, 3, 2}), w, Tensor::zeros({5}));
    for (double v : zero_out.data()) CHECK(v == 0.0);
    const Tensor q = random_tensor({2, 3, 2}, rng);
    const Tensor y1 = flatten_predict(q, w, Tensor::zeros({5}));
    const Tensor y3 = flatten_predict(scale(q, 3.0), w, Tensor::zeros({5}));
    CHECK(testing::max_abs_diff(scale(y1, 3.0).data(), y3.data()) < 1e-12);
    CHECK_THROWS_AS(flatten_predict(q, random_tensor({5, 5}, rng), Tensor::zeros({5})), DimensionError);

    Tensor wg = random_tensor({6, 5}, rng, -1, 1, true), bg = random_tensor({5}, rng, -1, 1, true);
    const auto r = testing::gradient_check([&] { return sum(square(flatten_predict(q, wg, bg))); }, {wg, bg});
    CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("end-to-end gradient of the MSE loss") {
    const SeesawModel m(tiny(2));
    std::mt19937_64 rng(8);
    const Tensor x = random_tensor({2, 16}, rng, -2, 4), y = random_tensor({2, 4}, rng, -2, 4);
    std::vector<Tensor> params;
    for (const auto& [_, t] : m.parameters()) params.push_back(t);
    const auto r = testing::gradient_check([&] { return mse_loss(m.forward(x).y_hat, y); }, params);
    CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("no_non equals full with the gate forced to zero, bit for bit") {
    SeesawModel full(tiny(3, Ablation::full));
    const SeesawModel no_non(tiny(3, Ablation::no_non));
    std::mt19937_64 rng(9);
    const Tensor x = random_tensor({2, 3, 16}, rng, -5, 5);
    const Tensor a = full.forward(x, {.gate_override = GateMode::stationary_only}).y_hat;
    const Tensor b = no_non.forward(x).y_hat;
    CHECK(testing::to_vec(a) == testing::to_vec(b));

    // Same result through the learned gate with zero weights and a saturating bias.
    for (auto* blocks : {&full.patch_blocks, &full.channel_blocks})
        for (auto& blk : *blocks) {
            for (auto& v : blk.wg.mutable_data()) v = 0.0;
            for (auto& v : blk.bg.mutable_data()) v = -1000.0;
        }
    CHECK(testing::to_vec(full.forward(x).y_hat) == testing::to_vec(b));
}

TEST_CASE("shift-scale covariance holds exactly when only the stationary branch is used") {
    const SeesawModel m(tiny(3, Ablation::no_non));
    std::mt19937_64 rng(10);
    const Tensor x = random_tensor({3, 16}, rng, -2, 2);
    const Tensor a = random_tensor({3}, rng, 0.5, 20), b = random_tensor({3}, rng, -50, 50);
    const Tensor y = m.forward(x).y_hat;
    const Tensor y_aff = m.forward(add_rows(mul_rows(x, a), b)).y_hat;
    const Tensor expected = add_rows(mul_rows(y, a), b);
    CHECK(testing::max_abs_diff(y_aff.data(), expected.data()) < 1e-7);
}

TEST_CASE("ablation wiring") {
    std::mt19937_64 rng(11);
    const Tensor x = random_tensor({2, 16}, rng);
    for (Ablation a : all_ablations()) {
        CAPTURE(to_string(a));
        const SeesawModel m(tiny(2, a));
        const ForwardResult r = m.forward(x, {.capture = true});
        CHECK(r.y_hat.shape() == Shape{2, 4});
        std::size_t patch = 0, channel = 0;
        for (const auto& d : r.diag) (d.kind == LayerDiagnostics::Kind::patch ? patch : channel)++;
        CHECK(patch == (a == Ablation::no_pd ? 0u : 1u));
        CHECK(channel == (a == Ablation::no_cr ? 0u : 1u));
        for (const auto& d : r.diag) {
            const double g = d.maps.gate.data()[0];
            if (a == Ablation::no_sta) CHECK(g == 1.0);
            if (a == Ablation::no_non) CHECK(g == 0.0);
            if (a == Ablation::no_gate) CHECK(g == 0.5);
        }
        if (a == Ablation::cr_then_pd) {
            CHECK(r.diag.front().kind == LayerDiagnostics::Kind::channel);
            CHECK(r.diag.back().maps.a_sta.dim(-1) == 2);  // patch layer sees N' tokens
        }
        if (a == Ablation::no_cr) CHECK(m.head_w.dim(0) == 5 * 8);
        CHECK(parse_ablation(to_string(a)) == a);
    }
    CHECK_THROWS_AS(parse_ablation("nope"), UsageError);
}

TEST_CASE("config validation and text round trip") {
    ModelConfig c = tiny(3, Ablation::cr_then_pd);
    c.dropout = 0.125;
    c.seed = 123456789012345ull;
    CHECK(ModelConfig::parse(c.serialize()) == c);
    ModelConfig bad = tiny();
    bad.heads = 3;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = tiny();
    bad.n_prime = 6;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = tiny();
    bad.patch_len = 20;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    CHECK_THROWS_AS(ModelConfig::parse("bogus = 1\n"), UsageError);
    CHECK_THROWS_AS(ModelConfig::parse("heads = two\n"), UsageError);
}

TEST_CASE("checkpoint round trip is bit exact") {
    SeesawModel m(tiny(2, Ablation::no_gate));
    std::mt19937_64 rng(12);
    for (auto& [_, t] : m.parameters()) {
        Tensor h = t;
        for (auto& v : h.mutable_data()) v += 1e-3 * (uniform01(rng) - 0.5);
    }
    const auto path = std::filesystem::temp_directory_path() / "seesaw_model_test.ckpt";
    save_checkpoint(path, m);
    const SeesawModel back = load_checkpoint(path);
    CHECK(back.config() == m.config());
    CHECK(back.snapshot() == m.snapshot());
    CHECK(checkpoint_bytes(back) == checkpoint_bytes(m));
    const Tensor x = random_tensor({2, 16}, rng);
    CHECK(testing::to_vec(back.forward(x).y_hat) == testing::to_vec(m.forward(x).y_hat));
    std::filesystem::remove(path);
}

TEST_CASE("malformed checkpoints are rejected") {
    const SeesawModel m(tiny());
    const std::string bytes = checkpoint_bytes(m);
    CHECK_THROWS_AS(model_from_checkpoint_bytes(bytes.substr(0, bytes.size() - 3)), CheckpointError);
    CHECK_THROWS_AS(model_from_checkpoint_bytes("NOTACKPT" + bytes.substr(8)), CheckpointError);
    std::string wrong_version = bytes;
    wrong_version[8] = 9;
    CHECK_THROWS_AS(model_from_checkpoint_bytes(wrong_version), CheckpointError);
    CHECK_THROWS_AS(model_from_checkpoint_bytes(bytes + "x"), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/model.ckpt"), CheckpointError);
}

}  // TEST_SUITE
