#include "seesaw/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "seesaw/flops.hpp"
#include "seesaw/kv.hpp"

namespace seesaw::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::set(std::string_view key, std::string_view value) {
    if (key == "channels")
        throw UsageError("config key 'channels' is determined by the data and cannot be set");
    if (key == "seed") {
        seed = kv::parse_u64(key, value);
        model.seed = seed;
        train.seed = seed;
        return;
    }
    if (model.set(key, value)) return;
    if (key == "lr") train.lr = kv::parse_double(key, value);
    else if (key == "epochs") train.epochs = kv::parse_size(key, value);
    else if (key == "batch_size") train.batch_size = kv::parse_size(key, value);
    else if (key == "loss") train.loss = parse_loss_mode(value);
    else if (key == "alpha") train.alpha = kv::parse_double(key, value);
    else if (key == "patience") train.patience = kv::parse_size(key, value);
    else if (key == "clip_norm") train.clip_norm = kv::parse_double(key, value);
    else if (key == "split_train") split.train = kv::parse_double(key, value);
    else if (key == "split_val") split.val = kv::parse_double(key, value);
    else if (key == "split_test") split.test = kv::parse_double(key, value);
    else if (key == "data") data = std::string(value);
    else if (key == "out") out = std::string(value);
    else if (key == "synth_channels") synth.channels = kv::parse_size(key, value);
    else if (key == "synth_total") synth.total = kv::parse_size(key, value);
    else if (key == "synth_seed") synth.seed = kv::parse_u64(key, value);
    else if (key == "synth_regime_period") synth.regime_period = kv::parse_size(key, value);
    else if (key == "synth_trend_scale") synth.trend_scale = kv::parse_double(key, value);
    else if (key == "synth_noise_std") synth.noise_std = kv::parse_double(key, value);
    else throw UsageError("unknown config key '" + std::string(key) + "'");
}

void RunConfig::validate() const {
    ModelConfig m = model;
    m.channels = std::max<std::size_t>(m.channels, 1);
    m.validate();
    train.validate();
    const double s = split.train + split.val + split.test;
    if (split.train <= 0.0 || split.val < 0.0 || split.test <= 0.0 || s > 1.0 + 1e-9)
        throw UsageError("config: split ratios need train > 0, val >= 0, test > 0 and a sum <= 1");
    if (out.empty()) throw UsageError("config: out must name a directory");
    if (data.empty() && (synth.channels == 0 || synth.regime_period == 0 || synth.total < synth.regime_period))
        throw UsageError("config: synthetic data needs synth_channels >= 1 and synth_total >= synth_regime_period");
}

std::string RunConfig::serialize() const {
    std::string s;
    auto line = [&s](std::string_view k, const std::string& v) { s += fmt::format("{} = {}\n", k, v); };
    // Model fields except channels, which come from the data.
    kv::for_each(model.serialize(), [&](std::string_view k, std::string_view v, std::size_t) {
        if (k != "channels" && k != "seed") line(k, std::string(v));
    });
    line("seed", std::to_string(seed));
    line("lr", kv::format_double(train.lr));
    line("epochs", std::to_string(train.epochs));
    line("batch_size", std::to_string(train.batch_size));
    line("loss", std::string(to_string(train.loss)));
    line("alpha", kv::format_double(train.alpha));
    line("patience", std::to_string(train.patience));
    line("clip_norm", kv::format_double(train.clip_norm));
    line("split_train", kv::format_double(split.train));
    line("split_val", kv::format_double(split.val));
    line("split_test", kv::format_double(split.test));
    line("data", data);
    line("out", out);
    line("synth_channels", std::to_string(synth.channels));
    line("synth_total", std::to_string(synth.total));
    line("synth_seed", std::to_string(synth.seed));
    line("synth_regime_period", std::to_string(synth.regime_period));
    line("synth_trend_scale", kv::format_double(synth.trend_scale));
    line("synth_noise_std", kv::format_double(synth.noise_std));
    return s;
}

RunConfig RunConfig::parse(std::string_view text) {
    RunConfig cfg;
    kv::for_each(text, [&cfg](std::string_view k, std::string_view v, std::size_t line) {
        try {
            cfg.set(k, v);
        } catch (const UsageError& e) {
            throw UsageError("config line " + std::to_string(line) + ": " + e.what());
        }
    });
    return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw UsageError("cannot open config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
}

RawSeries load_series(const RunConfig& cfg) {
    if (cfg.data.empty()) return synth_generate(cfg.synth);
    if (!fs::exists(cfg.data)) throw FormatError("data file not found: '" + cfg.data + "'");
    RawSeries rs = load_csv(cfg.data);
    for (const auto& d : rs.diagnostics) spdlog::warn("{}: {}", cfg.data, d);
    return rs;
}

ModelConfig resolve_model(const RunConfig& cfg, std::size_t channels) {
    ModelConfig m = cfg.model;
    m.channels = channels;
    m.seed = cfg.seed;
    m.validate();
    return m;
}

void init_logging() {
    const char* env = std::getenv("SEESAW_LOG");
    const std::string level = env ? env : "info";
    if (level == "quiet") spdlog::set_level(spdlog::level::off);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::set_level(spdlog::level::info);
    spdlog::set_pattern("[%l] %v");
}

void configure_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

// ---------------------------------------------------------------------------
// Commands

namespace {

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const CheckpointError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
    os << text;
}

SeesawModel load_compatible(const fs::path& checkpoint, std::size_t channels) {
    if (!fs::exists(checkpoint)) throw CheckpointError("checkpoint not found: '" + checkpoint.string() + "'");
    SeesawModel model = load_checkpoint(checkpoint);
    if (model.config().channels != channels)
        throw CheckpointError("checkpoint expects " + std::to_string(model.config().channels) +
                              " channels but the data has " + std::to_string(channels));
    return model;
}

DatasetSplits splits_for(const RunConfig& cfg, const ModelConfig& m) {
    auto series = std::make_shared<const RawSeries>(load_series(cfg));
    if (series->channels() != m.channels)
        throw CheckpointError("checkpoint expects " + std::to_string(m.channels) + " channels but the data has " +
                              std::to_string(series->channels()));
    return make_splits(series, cfg.split, m.seq_len, m.pred_len);
}

}  // namespace

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        cfg.validate();
        spdlog::info("effective config:\n{}", cfg.serialize());
        auto series = std::make_shared<const RawSeries>(load_series(cfg));
        const ModelConfig mcfg = resolve_model(cfg, series->channels());
        const DatasetSplits data = make_splits(series, cfg.split, mcfg.seq_len, mcfg.pred_len);
        SeesawModel model(mcfg);
        spdlog::info("model: {} parameters, {} train / {} val / {} test windows", model.parameter_count(),
                     data.train.size(), data.val.size(), data.test.size());

        out << fmt::format("{:>5}  {:>14}  {:>14}\n", "epoch", "train_loss", "val_loss");
        const TrainReport report = train(model, data, cfg.train, [&out](const EpochRecord& e) {
            out << fmt::format("{:>5}  {:>14.6f}  {:>14.6f}\n", e.epoch, e.train_loss, e.val_loss) << std::flush;
        });
        out << fmt::format("test_mse {:.6f}\ntest_mae {:.6f}\n", report.test.mse, report.test.mae);

        fs::create_directories(cfg.out);
        save_checkpoint(fs::path(cfg.out) / "model.ckpt", model);
        write_text(fs::path(cfg.out) / "report.txt", report.serialize());
        write_text(fs::path(cfg.out) / "config.txt", cfg.serialize());
        spdlog::info("wrote {}", (fs::path(cfg.out) / "model.ckpt").string());
        return kExitOk;
    });
}

int cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        cfg.validate();
        auto series = std::make_shared<const RawSeries>(load_series(cfg));
        const SeesawModel model = load_compatible(checkpoint, series->channels());
        const DatasetSplits data =
            make_splits(series, cfg.split, model.config().seq_len, model.config().pred_len);
        const Metrics m = evaluate(model, data.test);
        out << "test_mse = " << kv::format_double(m.mse) << '\n' << "test_mae = " << kv::format_double(m.mae) << '\n';
        return kExitOk;
    });
}

Tensor forecast_tail(const SeesawModel& model, const RawSeries& input) {
    const auto& m = model.config();
    if (input.channels() != m.channels)
        throw CheckpointError("checkpoint expects " + std::to_string(m.channels) + " channels but the input has " +
                              std::to_string(input.channels()));
    if (input.length() < m.seq_len)
        throw UsageError("forecast: input has " + std::to_string(input.length()) + " rows, need at least seq_len = " +
                         std::to_string(m.seq_len));
    const std::size_t total = input.length();
    const auto v = input.values.data();
    std::vector<double> x(m.channels * m.seq_len);
    for (std::size_t c = 0; c < m.channels; ++c)
        for (std::size_t t = 0; t < m.seq_len; ++t) x[c * m.seq_len + t] = v[c * total + total - m.seq_len + t];
    NoGradGuard no_grad;
    return model.forward(Tensor({m.channels, m.seq_len}, std::move(x))).y_hat;
}

int cmd_forecast(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& input, std::ostream& out,
                 std::ostream& err) {
    return guarded(err, [&] {
        if (!fs::exists(input)) throw FormatError("input file not found: '" + input.string() + "'");
        const RawSeries series = load_csv(input);
        const SeesawModel model = load_compatible(checkpoint, series.channels());
        const Tensor y = forecast_tail(model, series);
        // Emit time-major: one row per horizon step.
        const std::size_t c = y.dim(0), h = y.dim(1);
        std::ostringstream ss;
        write_csv(ss, series.channel_names, y);
        fs::create_directories(cfg.out);
        const fs::path path = fs::path(cfg.out) / "forecast.csv";
        write_text(path, ss.str());
        out << "wrote " << path.string() << " (" << h << " rows x " << c << " channels)\n";
        return kExitOk;
    });
}

// ---------------------------------------------------------------------------
// Attention export

void write_matrix_csv(const fs::path& path, std::span<const double> values, std::size_t rows, std::size_t cols) {
    std::string s;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (c) s += ',';
            s += kv::format_double(values[r * cols + c]);
        }
        s += '\n';
    }
    write_text(path, s);
}

void write_matrix_pgm(const fs::path& path, std::span<const double> values, std::size_t rows, std::size_t cols) {
    double lo = values[0], hi = values[0];
    for (std::size_t i = 0; i < rows * cols; ++i) {
        lo = std::min(lo, values[i]);
        hi = std::max(hi, values[i]);
    }
    std::string s = "P2\n";
    s += fmt::format("# linear min-max scaling: pixel = round(255 * (v - min) / (max - min)), 0 if max == min; "
                     "min = {}, max = {}\n",
                     kv::format_double(lo), kv::format_double(hi));
    s += fmt::format("{} {}\n255\n", cols, rows);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = values[r * cols + c];
            const int px = hi > lo ? static_cast<int>(std::lround(255.0 * (v - lo) / (hi - lo))) : 0;
            s += fmt::format("{}{}", c ? " " : "", px);
        }
        s += '\n';
    }
    write_text(path, s);
}

ExportedMaps export_attention(const SeesawModel& model, const Tensor& x, const fs::path& dir) {
    if (x.rank() != 2) throw UsageError("export_attention: expected a single [C, L] instance");
    NoGradGuard no_grad;
    const ForwardResult res = model.forward(x, {.capture = true});
    fs::create_directories(dir);
    ExportedMaps out;
    for (const auto& layer : res.diag) {
        const Tensor& a_sta = layer.maps.a_sta;  // [1, S, heads, T, T]
        const Tensor& a_non = layer.maps.a_non;
        const Tensor& gate = layer.maps.gate;  // [1, S, T, heads]
        const std::size_t seqs = a_sta.dim(1), heads = a_sta.dim(2), t = a_sta.dim(3);
        const bool patch = layer.kind == LayerDiagnostics::Kind::patch;
        for (std::size_t s = 0; s < seqs; ++s) {
            const std::string prefix =
                fmt::format("{}{}_{}{}", patch ? "patch" : "channel", layer.layer, patch ? "ch" : "pos", s);
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t off = (s * heads + h) * t * t;
                for (const auto& [tag, maps] : {std::pair{"sta", &a_sta}, std::pair{"non", &a_non}}) {
                    const auto block = maps->data().subspan(off, t * t);
                    const fs::path base = dir / fmt::format("{}_head{}_{}", prefix, h, tag);
                    write_matrix_csv(base.string() + ".csv", block, t, t);
                    write_matrix_pgm(base.string() + ".pgm", block, t, t);
                    out.files.push_back(base.string() + ".csv");
                    out.files.push_back(base.string() + ".pgm");
                }
            }
            // Weight on the stationary branch, 1 - G: one row per token, one column per head.
            std::vector<double> weight(t * heads);
            for (std::size_t i = 0; i < t * heads; ++i) weight[i] = 1.0 - gate.data()[s * t * heads + i];
            const fs::path gpath = dir / (prefix + "_stationary_weight.csv");
            write_matrix_csv(gpath, weight, t, heads);
            out.files.push_back(gpath);
        }
    }
    return out;
}

int cmd_export_attention(const RunConfig& cfg, const fs::path& checkpoint, std::size_t instance, std::ostream& out,
                         std::ostream& err) {
    return guarded(err, [&] {
        cfg.validate();
        auto series = std::make_shared<const RawSeries>(load_series(cfg));
        const SeesawModel model = load_compatible(checkpoint, series->channels());
        const DatasetSplits data =
            make_splits(series, cfg.split, model.config().seq_len, model.config().pred_len);
        if (instance >= data.test.size())
            throw UsageError("export-attention: instance " + std::to_string(instance) + " out of range (test split has " +
                             std::to_string(data.test.size()) + " windows)");
        const fs::path dir = fs::path(cfg.out) / fmt::format("attention_{}", instance);
        const ExportedMaps maps = export_attention(model, data.test.instance(instance).x, dir);
        out << "wrote " << maps.files.size() << " files to " << dir.string() << '\n';
        return kExitOk;
    });
}

int cmd_flops(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        cfg.validate();
        std::size_t channels = cfg.synth.channels;
        if (!cfg.data.empty()) channels = load_series(cfg).channels();
        const ModelConfig m = resolve_model(cfg, channels);
        const ModelFlops f = count_model_flops(m);
        auto row = [&out](std::string_view name, const AttentionFlops& a) {
            out << fmt::format("{:<16} {:>16.0f} {:>16.0f} {:>16.0f} {:>16.0f}\n", name, a.score, a.projection,
                               a.aggregation, a.total());
        };
        out << fmt::format("channels={} tokens_per_channel={} aggregated={} d_model={} heads={}\n", m.channels,
                           m.n_patches(), m.aggregated_patches(), m.d_model, m.heads);
        out << fmt::format("{:<16} {:>16} {:>16} {:>16} {:>16}\n", "block", "score", "projection", "aggregation",
                           "total");
        row("asna.patch", f.asna_patch);
        row("asna.channel", f.asna_channel);
        row("asna.total", f.asna_total());
        row("single.patch", f.single_patch);
        row("single.channel", f.single_channel);
        row("single.total", f.single_total());
        out << fmt::format("score_ratio {:.6f}\n", f.score_ratio());
        out << fmt::format("total_ratio {:.6f}\n", f.asna_total().total() / f.single_total().total());
        return kExitOk;
    });
}

int cmd_synth(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        cfg.validate();
        const RawSeries rs = synth_generate(cfg.synth);
        fs::create_directories(cfg.out);
        const fs::path path = fs::path(cfg.out) / "synth.csv";
        std::ostringstream ss;
        write_csv(ss, rs.channel_names, rs.values);
        write_text(path, ss.str());
        out << "wrote " << path.string() << " (" << rs.length() << " rows x " << rs.channels() << " channels)\n";
        return kExitOk;
    });
}

}  // namespace seesaw::cli
