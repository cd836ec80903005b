#include "seesaw/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "seesaw/kv.hpp"

namespace seesaw {

namespace {

void check_same(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": prediction " + shape_str(a.shape()) + " vs target " +
                             shape_str(b.shape()));
}

}  // namespace

std::string_view to_string(LossMode m) { return m == LossMode::fredf ? "fredf" : "mse"; }

LossMode parse_loss_mode(std::string_view text) {
    if (text == "fredf") return LossMode::fredf;
    if (text == "mse") return LossMode::mse;
    throw UsageError("unknown loss '" + std::string(text) + "' (expected fredf or mse)");
}

void TrainConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw UsageError("train config: lr must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("train config: alpha must lie in [0, 1]");
    if (batch_size == 0) throw UsageError("train config: batch_size must be positive");
    if (clip_norm < 0.0) throw UsageError("train config: clip_norm must be non-negative");
}

// ---------------------------------------------------------------------------
// Losses

Tensor fredf_loss(const Tensor& y_hat, const Tensor& y, double alpha) {
    check_same("fredf_loss", y_hat, y);
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("fredf_loss: alpha must lie in [0, 1]");
    const Tensor diff = sub(y_hat, y);
    const Tensor time_term = mean(abs(diff));
    if (alpha == 0.0) return time_term;
    // The DFT is linear, so F(y_hat) - F(y) = F(y_hat - y).
    const Tensor freq_term = mean(complex_abs(rdft(diff)));
    if (alpha == 1.0) return freq_term;
    return add(scale(freq_term, alpha), scale(time_term, 1.0 - alpha));
}

Tensor mse_loss(const Tensor& y_hat, const Tensor& y) {
    check_same("mse_loss", y_hat, y);
    return mean(square(sub(y_hat, y)));
}

Tensor mae_loss(const Tensor& y_hat, const Tensor& y) {
    check_same("mae_loss", y_hat, y);
    return mean(abs(sub(y_hat, y)));
}

Tensor training_loss(const Tensor& y_hat, const Tensor& y, LossMode mode, double alpha) {
    return mode == LossMode::fredf ? fredf_loss(y_hat, y, alpha) : mse_loss(y_hat, y);
}

Metrics metrics(const Tensor& y_hat, const Tensor& y) {
    check_same("metrics", y_hat, y);
    const auto a = y_hat.data();
    const auto b = y.data();
    Metrics m;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double e = a[i] - b[i];
        m.mse += e * e;
        m.mae += std::abs(e);
    }
    m.mse /= static_cast<double>(a.size());
    m.mae /= static_cast<double>(a.size());
    return m;
}

// ---------------------------------------------------------------------------
// Optimizer

void adam_step(std::span<const NamedTensor> params, AdamState& state, double lr) {
    if (state.m.empty()) {
        for (const auto& [_, t] : params) {
            state.m.emplace_back(t.numel(), 0.0);
            state.v.emplace_back(t.numel(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw UsageError("adam: state does not match parameter list");
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (double g : params[p].second.grad())
            if (!std::isfinite(g)) throw TrainingError("adam: non-finite gradient in parameter '" + params[p].first + "'");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(AdamState::beta1, t);
    const double c2 = 1.0 - std::pow(AdamState::beta2, t);
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor param = params[p].second;
        const auto g = param.grad();
        auto w = param.mutable_data();
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g.empty() ? 0.0 : g[i];
            m[i] = AdamState::beta1 * m[i] + (1.0 - AdamState::beta1) * gi;
            v[i] = AdamState::beta2 * v[i] + (1.0 - AdamState::beta2) * gi * gi;
            w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + AdamState::eps);
        }
    }
}

double clip_grad_norm(std::span<const NamedTensor> params, double max_norm) {
    double sq = 0.0;
    for (const auto& [_, t] : params)
        for (double g : t.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double f = max_norm / norm;
        for (const auto& [_, t] : params) {
            if (!t.has_grad()) continue;
            for (double& g : grad_buffer(t)) g *= f;
        }
    }
    return norm;
}

// ---------------------------------------------------------------------------
// Report

std::string TrainReport::serialize() const {
    std::string s = "format = seesaw-train-report-v1\n";
    auto line = [&s](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
    line("train_windows", std::to_string(train_windows));
    line("val_windows", std::to_string(val_windows));
    line("test_windows", std::to_string(test_windows));
    line("epochs_run", std::to_string(epochs.size()));
    line("best_epoch", best_epoch ? std::to_string(*best_epoch) : "none");
    line("stopped_early", stopped_early ? "true" : "false");
    for (const auto& e : epochs) {
        const std::string p = "epoch." + std::to_string(e.epoch) + ".";
        line(p + "train_loss", kv::format_double(e.train_loss));
        line(p + "val_loss", kv::format_double(e.val_loss));
    }
    line("test_mse", kv::format_double(test.mse));
    line("test_mae", kv::format_double(test.mae));
    line("baseline_mse", kv::format_double(baseline.mse));
    line("baseline_mae", kv::format_double(baseline.mae));
    return s;
}

TrainReport TrainReport::parse(std::string_view text) {
    TrainReport r;
    std::size_t epochs_run = 0;
    bool format_seen = false;
    kv::for_each(text, [&](std::string_view k, std::string_view v, std::size_t line) {
        if (k == "format") {
            if (v != "seesaw-train-report-v1") throw UsageError("report: unsupported format '" + std::string(v) + "'");
            format_seen = true;
        } else if (k == "train_windows") r.train_windows = kv::parse_size(k, v);
        else if (k == "val_windows") r.val_windows = kv::parse_size(k, v);
        else if (k == "test_windows") r.test_windows = kv::parse_size(k, v);
        else if (k == "epochs_run") {
            epochs_run = kv::parse_size(k, v);
            r.epochs.resize(epochs_run);
            for (std::size_t i = 0; i < epochs_run; ++i) r.epochs[i].epoch = i;
        } else if (k == "best_epoch") {
            if (v != "none") r.best_epoch = kv::parse_size(k, v);
        } else if (k == "stopped_early") r.stopped_early = v == "true";
        else if (k == "test_mse") r.test.mse = kv::parse_double(k, v);
        else if (k == "test_mae") r.test.mae = kv::parse_double(k, v);
        else if (k == "baseline_mse") r.baseline.mse = kv::parse_double(k, v);
        else if (k == "baseline_mae") r.baseline.mae = kv::parse_double(k, v);
        else if (k.starts_with("epoch.")) {
            const auto rest = k.substr(6);
            const auto dot = rest.find('.');
            const std::size_t idx = kv::parse_size(k, rest.substr(0, dot));
            if (idx >= r.epochs.size()) throw UsageError("report line " + std::to_string(line) + ": epoch index out of range");
            const auto field = rest.substr(dot + 1);
            if (field == "train_loss") r.epochs[idx].train_loss = kv::parse_double(k, v);
            else if (field == "val_loss") r.epochs[idx].val_loss = kv::parse_double(k, v);
            else throw UsageError("report line " + std::to_string(line) + ": unknown key '" + std::string(k) + "'");
        } else {
            throw UsageError("report line " + std::to_string(line) + ": unknown key '" + std::string(k) + "'");
        }
    });
    if (!format_seen) throw UsageError("report: missing format line");
    return r;
}

// ---------------------------------------------------------------------------
// Loop

Metrics repeat_last_baseline(const WindowDataset& windows) {
    Metrics m;
    std::size_t count = 0;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto inst = windows.instance(i);
        const std::size_t c = inst.x.dim(0), l = inst.x.dim(1), h = inst.y.dim(1);
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double last = inst.x.data()[ch * l + l - 1];
            for (std::size_t t = 0; t < h; ++t) {
                const double e = last - inst.y.data()[ch * h + t];
                m.mse += e * e;
                m.mae += std::abs(e);
                ++count;
            }
        }
    }
    if (count) {
        m.mse /= static_cast<double>(count);
        m.mae /= static_cast<double>(count);
    }
    return m;
}

Metrics evaluate(const SeesawModel& model, const WindowDataset& windows, std::size_t batch_size) {
    if (windows.empty()) throw UsageError("evaluate: no windows");
    NoGradGuard no_grad;
    Metrics m;
    std::size_t count = 0;
    std::vector<std::size_t> idx;
    for (std::size_t b = 0; b < windows.size(); b += batch_size) {
        idx.resize(std::min(batch_size, windows.size() - b));
        std::iota(idx.begin(), idx.end(), b);
        const auto batch = windows.batch(idx);
        const Tensor y_hat = model.forward(batch.x).y_hat;
        const auto a = y_hat.data();
        const auto y = batch.y.data();
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double e = a[i] - y[i];
            m.mse += e * e;
            m.mae += std::abs(e);
        }
        count += a.size();
    }
    m.mse /= static_cast<double>(count);
    m.mae /= static_cast<double>(count);
    return m;
}

double evaluate_loss(const SeesawModel& model, const WindowDataset& windows, const TrainConfig& cfg) {
    NoGradGuard no_grad;
    double total = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t b = 0; b < windows.size(); b += cfg.batch_size) {
        idx.resize(std::min(cfg.batch_size, windows.size() - b));
        std::iota(idx.begin(), idx.end(), b);
        const auto batch = windows.batch(idx);
        const Tensor y_hat = model.forward(batch.x).y_hat;
        total += training_loss(y_hat, batch.y, cfg.loss, cfg.alpha).item() * static_cast<double>(idx.size());
    }
    return total / static_cast<double>(windows.size());
}

TrainReport train(SeesawModel& model, const DatasetSplits& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (data.train.empty()) throw UsageError("train: training split has no windows");
    if (data.test.empty()) throw UsageError("train: test split has no windows");
    if (cfg.epochs > 0 && data.val.empty()) throw UsageError("train: validation split has no windows");
    if (data.train.channels() != model.config().channels)
        throw UsageError("train: data has " + std::to_string(data.train.channels()) + " channels, model expects " +
                         std::to_string(model.config().channels));

    TrainReport report;
    report.train_windows = data.train.size();
    report.val_windows = data.val.size();
    report.test_windows = data.test.size();

    std::mt19937_64 rng(cfg.seed);
    AdamState adam;
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_params;
    std::size_t since_best = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates from raw engine output, independent of stdlib distributions.
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::span<const std::size_t> idx(order.data() + b, std::min(cfg.batch_size, order.size() - b));
            const auto batch = data.train.batch(idx);
            model.zero_grad();
            const Tensor y_hat = model.forward(batch.x, {.train = true, .rng = &rng}).y_hat;
            const Tensor loss = training_loss(y_hat, batch.y, cfg.loss, cfg.alpha);
            if (!std::isfinite(loss.item())) throw TrainingError("train: non-finite loss in epoch " + std::to_string(epoch));
            backward(loss);
            if (cfg.clip_norm > 0.0) clip_grad_norm(model.parameters(), cfg.clip_norm);
            adam_step(model.parameters(), adam, cfg.lr);
            loss_sum += loss.item() * static_cast<double>(idx.size());
        }
        model.zero_grad();

        EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), evaluate_loss(model, data.val, cfg)};
        report.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (rec.val_loss < best_val) {
            best_val = rec.val_loss;
            best_params = model.snapshot();
            report.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience && cfg.patience > 0) {
            report.stopped_early = epoch + 1 < cfg.epochs;
            break;
        }
    }
    if (!best_params.empty()) model.load_values(best_params);

    report.test = evaluate(model, data.test);
    report.baseline = repeat_last_baseline(data.test);
    return report;
}

}  // namespace seesaw
