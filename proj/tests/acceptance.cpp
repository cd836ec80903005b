// Acceptance checks: one PASS/FAIL line per criterion.
//   seesaw_acceptance        run every criterion
//   seesaw_acceptance N      run criterion N only

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <regex>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "support.hpp"
#include "seesaw/cli.hpp"
#include "seesaw/flops.hpp"
#include "seesaw/training.hpp"

using namespace seesaw;
namespace fs = std::filesystem;
using testing::random_tensor;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("seesaw_acceptance_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::vector<double> read_csv_values(const fs::path& p, std::size_t* rows = nullptr) {
    std::vector<double> v;
    std::ifstream is(p);
    std::string line, cell;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
        std::stringstream ls(line);
        while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
    }
    if (rows) *rows = n;
    return v;
}

ModelConfig gradient_config(Ablation ablation = Ablation::full) {
    ModelConfig c;
    c.channels = 2;
    c.seq_len = 16;
    c.pred_len = 4;
    c.patch_len = 4;
    c.stride = 4;
    c.d_model = 8;
    c.heads = 2;
    c.patch_layers = 1;
    c.channel_layers = 1;
    c.n_prime = 2;
    c.dropout = 0.0;
    c.ablation = ablation;
    c.seed = 31;
    return c;
}

// Tape gradient of the fredf loss against central differences over every parameter.
testing::GradCheck model_gradient_check(const SeesawModel& model, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Tensor x = random_tensor({2, 2, 16}, rng, -3, 5), y = random_tensor({2, 2, 4}, rng, -3, 5);
    std::vector<Tensor> params;
    for (const auto& [_, t] : model.parameters()) params.push_back(t);
    return testing::gradient_check([&] { return fredf_loss(model.forward(x).y_hat, y, 0.5); }, params);
}

Outcome criterion_1() {
    const auto t0 = Clock::now();
    const SeesawModel model(gradient_config());
    const auto r = model_gradient_check(model, 1);
    const double secs = seconds_since(t0);
    return {r.max_rel_error < 1e-4 && secs < 60.0,
            fmt::format("fredf gradient through the full model, {} parameters, max rel err {:.3e} (< 1e-4), {:.1f} s (< 60 s)",
                        r.checked, r.max_rel_error, secs)};
}

Outcome criterion_2() {
    double worst = 0.0;
    std::size_t cases = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        std::mt19937_64 rng(9000 + seed);
        const std::size_t heads = 1 + seed % 2;
        const std::size_t d = heads * (1 + (seed / 2) % 3);  // <= 6
        const std::size_t t = 1 + seed % 4;
        AsnaParams p = AsnaParams::init(d, heads, 2 * d, 0.0, rng);
        testing::perturb(p, rng);
        const Tensor zs = random_tensor({t, d}, rng, -2, 2), zn = random_tensor({t, d}, rng, -4, 4);
        const AsnaOutput out = asna_forward(zs, zn, p, {.capture = true});
        const oracle::AsnaResult ref = oracle::asna_forward(testing::to_mat(zs), testing::to_mat(zn), testing::to_oracle(p));
        worst = std::max(worst, testing::max_abs_diff(out.z_sta.data(), ref.z_sta.v));
        worst = std::max(worst, testing::max_abs_diff(out.z_non.data(), ref.z_non.v));
        worst = std::max(worst, testing::max_abs_diff(out.diag->gate.data(), ref.gate.v));
        for (std::size_t h = 0; h < heads; ++h) {
            worst = std::max(worst, testing::max_abs_diff(out.diag->a_sta.data().subspan(h * t * t, t * t), ref.a_sta[h].v));
            worst = std::max(worst, testing::max_abs_diff(out.diag->a_non.data().subspan(h * t * t, t * t), ref.a_non[h].v));
        }
        ++cases;
    }
    return {worst < 1e-10 && cases >= 20,
            fmt::format("{} random blocks (T <= 4, D <= 6, heads <= 2), max abs diff {:.3e} (< 1e-10)", cases, worst)};
}

Outcome criterion_3() {
    double worst = 0.0;
    std::size_t matrices = 0;
    const fs::path root = fresh_dir("rows");
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        ModelConfig c = gradient_config(seed % 2 ? Ablation::cr_then_pd : Ablation::full);
        c.channels = 2 + seed % 3;
        c.seed = 100 + seed;
        SeesawModel model(c);
        std::mt19937_64 rng(seed);
        for (auto& [_, t] : model.parameters()) {
            Tensor h = t;
            for (auto& v : h.mutable_data()) v += 0.5 * (uniform01(rng) - 0.5);
        }
        const Tensor x = random_tensor({c.channels, c.seq_len}, rng, -10, 10);
        const fs::path dir = root / std::to_string(seed);
        cli::export_attention(model, x, dir);

        for (const auto& e : fs::directory_iterator(dir)) {
            const std::string name = e.path().filename().string();
            const std::string suffix = "_stationary_weight.csv";
            if (name.size() < suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
                continue;
            const std::string prefix = name.substr(0, name.size() - suffix.size());
            std::size_t t = 0;
            const auto weight = read_csv_values(e.path(), &t);
            const std::size_t heads = weight.size() / t;
            for (std::size_t h = 0; h < heads; ++h) {
                const auto a_sta = read_csv_values(dir / fmt::format("{}_head{}_sta.csv", prefix, h));
                const auto a_non = read_csv_values(dir / fmt::format("{}_head{}_non.csv", prefix, h));
                for (std::size_t i = 0; i < t; ++i) {
                    const double w = weight[i * heads + h];
                    double s_sta = 0, s_non = 0, s_fused = 0;
                    for (std::size_t j = 0; j < t; ++j) {
                        s_sta += a_sta[i * t + j];
                        s_non += a_non[i * t + j];
                        s_fused += w * a_sta[i * t + j] + (1.0 - w) * a_non[i * t + j];
                    }
                    worst = std::max({worst, std::abs(s_sta - 1), std::abs(s_non - 1), std::abs(s_fused - 1)});
                }
                matrices += 3;
            }
        }
    }
    return {worst < 1e-6 && matrices > 0,
            fmt::format("{} exported sta/non/fused matrices, worst row-sum error {:.3e} (< 1e-6)", matrices, worst)};
}

Outcome criterion_4() {
    std::mt19937_64 rng(4);
    double round_trip = 0.0;
    for (int i = 0; i < 20; ++i) {
        const Tensor x = random_tensor({3, 24}, rng, -100, 100);
        const NormalizedInput n = in_norm(x);
        round_trip = std::max(round_trip, testing::max_abs_diff(in_denorm(n.x_sta, n.stats).data(), x.data()));
    }

    ModelConfig c = gradient_config();
    c.channels = 3;
    SeesawModel model(c);
    for (auto& [_, t] : model.parameters()) {
        Tensor h = t;
        for (auto& v : h.mutable_data()) v += 0.2 * (uniform01(rng) - 0.5);
    }
    double covariance = 0.0;
    for (int i = 0; i < 10; ++i) {
        const Tensor x = random_tensor({3, 16}, rng, -2, 2);
        const Tensor a = random_tensor({3}, rng, 0.5, 5), b = random_tensor({3}, rng, -10, 10);
        const Tensor y = model.forward(x).y_hat;
        const Tensor y_aff = model.forward(add_rows(mul_rows(x, a), b)).y_hat;
        covariance = std::max(covariance, testing::max_abs_diff(y_aff.data(), add_rows(mul_rows(y, a), b).data()));
    }
    return {round_trip < 1e-9 && covariance < 1e-6,
            fmt::format("denorm(norm(x)) max err {:.3e} (< 1e-9); full-model affine covariance max err {:.3e} (< 1e-6)",
                        round_trip, covariance)};
}

Outcome criterion_5() {
    SynthSpec s;
    s.channels = 2;
    s.total = 300;
    s.regime_period = 60;
    const auto series = std::make_shared<const RawSeries>(synth_generate(s));
    const DatasetSplits data = make_splits(series, {}, 16, 4);
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 16;

    std::string failures;
    double worst_grad = 0.0;
    for (Ablation a : all_ablations()) {
        try {
            ModelConfig c = gradient_config(a);
            SeesawModel trained(c);
            const TrainReport r = train(trained, data, tc);
            if (r.epochs.size() != 1 || !std::isfinite(r.test.mse)) failures += fmt::format(" {}:train", to_string(a));
            const auto g = model_gradient_check(SeesawModel(c), 5);
            worst_grad = std::max(worst_grad, g.max_rel_error);
            if (!(g.max_rel_error < 1e-4)) failures += fmt::format(" {}:grad", to_string(a));
        } catch (const std::exception& e) {
            failures += fmt::format(" {}:{}", to_string(a), e.what());
        }
    }

    ModelConfig c = gradient_config();
    c.channels = 3;
    const SeesawModel full(c);
    c.ablation = Ablation::no_non;
    const SeesawModel no_non(c);
    std::mt19937_64 rng(55);
    const Tensor x = random_tensor({4, 3, 16}, rng, -5, 5);
    const bool identical = testing::to_vec(full.forward(x, {.gate_override = GateMode::stationary_only}).y_hat) ==
                           testing::to_vec(no_non.forward(x).y_hat);
    return {failures.empty() && identical,
            fmt::format("{} modes trained 1 epoch, worst gradient rel err {:.3e}{}; no_non vs full with G = 0 {}",
                        all_ablations().size(), worst_grad, failures.empty() ? "" : " failures:" + failures,
                        identical ? "bit-identical" : "DIFFER")};
}

Outcome criterion_6() {
    const fs::path dir = fresh_dir("skill");
    cli::RunConfig cfg;
    cfg.out = dir.string();
    const auto t0 = Clock::now();
    std::ostringstream out, err;
    const int rc = cli::cmd_train(cfg, out, err);
    const double secs = seconds_since(t0);
    if (rc != cli::kExitOk) return {false, "train failed: " + err.str()};
    const TrainReport r = TrainReport::parse(slurp(dir / "report.txt"));
    const double gain = 1.0 - r.test.mse / r.baseline.mse;
    return {gain >= 0.3 && r.epochs.size() <= 20 && secs < 300.0,
            fmt::format("C={} Total={} defaults, {} epochs: test MSE {:.4f} vs repeat-last {:.4f} ({:.1f}% lower, >= 30%), "
                        "{:.0f} s (< 300 s)",
                        cfg.synth.channels, cfg.synth.total, r.epochs.size(), r.test.mse, r.baseline.mse, 100 * gain,
                        secs)};
}

Outcome criterion_7() {
    std::string runs;
    bool ok = true;
    for (const char* loss : {"mse", "fredf"}) {
        const fs::path dir = fresh_dir(std::string("loss_") + loss);
        cli::RunConfig cfg;
        cfg.out = dir.string();
        cfg.set("loss", loss);
        cfg.train.epochs = 1;
        std::ostringstream out, err;
        const int rc = cli::cmd_train(cfg, out, err);
        if (rc != cli::kExitOk) {
            ok = false;
            runs += fmt::format(" {} failed ({})", loss, err.str());
            continue;
        }
        const TrainReport r = TrainReport::parse(slurp(dir / "report.txt"));
        ok = ok && std::isfinite(r.test.mse);
        runs += fmt::format(" {} test MSE {:.4f};", loss, r.test.mse);
    }
    double worst = 0.0;
    std::mt19937_64 rng(7);
    for (int i = 0; i < 20; ++i) {
        const std::size_t h = 1 + i % 24;
        const Tensor a = random_tensor({3, 4, h}, rng, -50, 50), b = random_tensor({3, 4, h}, rng, -50, 50);
        worst = std::max(worst, std::abs(fredf_loss(a, b, 0.0).item() - mae_loss(a, b).item()));
    }
    ok = ok && worst < 1e-12;
    return {ok, fmt::format("synthetic runs (1 epoch each):{} fredf(alpha=0) vs MAE max diff {:.3e} (< 1e-12)", runs, worst)};
}

Outcome criterion_8() {
    cli::RunConfig cfg;
    std::ostringstream out, err;
    if (cli::cmd_flops(cfg, out, err) != cli::kExitOk) return {false, "flops failed: " + err.str()};
    std::smatch m;
    const std::string text = out.str();
    if (!std::regex_search(text, m, std::regex(R"(score_ratio\s+([0-9.]+))"))) return {false, "no score_ratio in output"};
    const double ratio = std::stod(m[1]);
    return {ratio >= 1.9 && ratio <= 2.3, fmt::format("default config score-FLOP ratio {:.6f} (in [1.9, 2.3])", ratio)};
}

Outcome criterion_9() {
    std::string reports[2], checkpoints[2], evals[2];
    for (int i = 0; i < 2; ++i) {
        const fs::path dir = fresh_dir("determinism_" + std::to_string(i));
        cli::RunConfig cfg;
        cfg.out = dir.string();
        cfg.synth.total = 1200;
        cfg.synth.regime_period = 200;
        cfg.train.epochs = 2;
        std::ostringstream out, err, eo, ee;
        if (cli::cmd_train(cfg, out, err) != cli::kExitOk) return {false, "train failed: " + err.str()};
        if (cli::cmd_eval(cfg, dir / "model.ckpt", eo, ee) != cli::kExitOk) return {false, "eval failed: " + ee.str()};
        reports[i] = slurp(dir / "report.txt");
        checkpoints[i] = slurp(dir / "model.ckpt");
        evals[i] = eo.str();
    }
    const bool same = reports[0] == reports[1] && checkpoints[0] == checkpoints[1] && evals[0] == evals[1];
    return {same && !checkpoints[0].empty(),
            fmt::format("two seeded train+eval runs: reports {}, checkpoints ({} bytes) {}, eval output {}",
                        reports[0] == reports[1] ? "identical" : "DIFFER", checkpoints[0].size(),
                        checkpoints[0] == checkpoints[1] ? "identical" : "DIFFER",
                        evals[0] == evals[1] ? "identical" : "DIFFER")};
}

Outcome criterion_10() {
    // Train briefly so the maps reflect learned weights, then export a pair
    // of instances that differ only by a per-channel scale and offset.
    const fs::path dir = fresh_dir("fig");
    cli::RunConfig cfg;
    cfg.out = dir.string();
    cfg.synth.total = 1200;
    cfg.synth.regime_period = 200;
    cfg.train.epochs = 1;
    std::ostringstream out, err;
    if (cli::cmd_train(cfg, out, err) != cli::kExitOk) return {false, "train failed: " + err.str()};
    const SeesawModel model = load_checkpoint(dir / "model.ckpt");
    const RawSeries series = cli::load_series(cfg);
    const auto shared = std::make_shared<const RawSeries>(series);
    const DatasetSplits data = make_splits(shared, cfg.split, model.config().seq_len, model.config().pred_len);
    const Tensor x = data.test.instance(0).x;
    const std::size_t c = x.dim(0);
    std::vector<double> scale(c), offset(c);
    for (std::size_t k = 0; k < c; ++k) {
        scale[k] = 3.0 + static_cast<double>(k);
        offset[k] = 40.0 - 25.0 * static_cast<double>(k);
    }
    const Tensor x2 = add_rows(mul_rows(x, Tensor({c}, scale)), Tensor({c}, offset));
    const double in_gap = testing::max_abs_diff(in_norm(x).x_sta.data(), in_norm(x2).x_sta.data());

    cli::export_attention(model, x, dir / "a");
    cli::export_attention(model, x2, dir / "b");
    double d_sta = 0.0, d_non = 0.0;
    for (const auto& e : fs::directory_iterator(dir / "a")) {
        const std::string name = e.path().filename().string();
        const bool sta = name.ends_with("_sta.csv"), non = name.ends_with("_non.csv");
        if (!sta && !non) continue;
        const auto a = read_csv_values(e.path()), b = read_csv_values(dir / "b" / name);
        double sq = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
        (sta ? d_sta : d_non) += sq;
    }
    d_sta = std::sqrt(d_sta);
    d_non = std::sqrt(d_non);
    return {in_gap < 1e-9 && d_sta < d_non,
            fmt::format("instances equal after normalization (gap {:.1e}): ||dA_sta||_F {:.4e} < ||dA_non||_F {:.4e}",
                        in_gap, d_sta, d_non)};
}

const std::vector<std::function<Outcome()>> kCriteria = {criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                                                         criterion_6, criterion_7, criterion_8, criterion_9, criterion_10};

}  // namespace

int main(int argc, char** argv) {
    cli::configure_allocator();
    spdlog::set_level(spdlog::level::warn);
    std::vector<std::size_t> which;
    if (argc > 1) {
        const int n = std::atoi(argv[1]);
        if (n < 1 || n > static_cast<int>(kCriteria.size())) {
            std::cerr << "usage: seesaw_acceptance [1-" << kCriteria.size() << "]\n";
            return 2;
        }
        which.push_back(static_cast<std::size_t>(n));
    } else {
        for (std::size_t i = 1; i <= kCriteria.size(); ++i) which.push_back(i);
    }
    int failed = 0;
    for (std::size_t n : which) {
        Outcome o;
        try {
            o = kCriteria[n - 1]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << n << ": " << o.detail << std::endl;
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
