#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "seesaw/cli.hpp"

namespace {

struct Flags {
    std::string config;
    std::optional<std::string> data, out, ablation, loss;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> pred_len, epochs;
    std::optional<double> alpha;
    std::string checkpoint;
    std::string input;
    std::size_t instance = 0;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "key = value config file");
    cmd->add_option("--data", f.data, "CSV data file (omit for synthetic data)");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--seed", f.seed, "seed for init, shuffling and dropout");
    cmd->add_option("--pred-len", f.pred_len, "forecast horizon H");
    cmd->add_option("--ablation", f.ablation, "full|no_sta|no_non|no_gate|no_pd|no_cr|cr_then_pd");
    cmd->add_option("--loss", f.loss, "fredf|mse");
    cmd->add_option("--alpha", f.alpha, "frequency weight of the fredf loss");
    cmd->add_option("--epochs", f.epochs, "maximum training epochs");
}

// Defaults, then the config file, then flags.
seesaw::cli::RunConfig resolve(const Flags& f) {
    seesaw::cli::RunConfig cfg;
    if (!f.config.empty()) cfg = seesaw::cli::RunConfig::load(f.config);
    if (f.data) cfg.set("data", *f.data);
    if (f.out) cfg.set("out", *f.out);
    if (f.seed) cfg.set("seed", std::to_string(*f.seed));
    if (f.pred_len) cfg.set("pred_len", std::to_string(*f.pred_len));
    if (f.ablation) cfg.set("ablation", *f.ablation);
    if (f.loss) cfg.set("loss", *f.loss);
    if (f.alpha) cfg.set("alpha", fmt::format("{}", *f.alpha));
    if (f.epochs) cfg.set("epochs", std::to_string(*f.epochs));
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    namespace sc = seesaw::cli;
    sc::init_logging();
    sc::configure_allocator();

    CLI::App app{"seesaw: dual-path attention forecaster"};
    app.require_subcommand(1);
    Flags f;

    auto* train = app.add_subcommand("train", "train a model and write model.ckpt and report.txt");
    auto* eval = app.add_subcommand("eval", "test-split metrics of a checkpoint");
    auto* forecast = app.add_subcommand("forecast", "forecast from the trailing rows of a CSV");
    auto* attn = app.add_subcommand("export-attention", "write attention maps and gate weights");
    auto* flops = app.add_subcommand("flops", "attention FLOP counts, dual-branch vs single-branch");
    auto* synth = app.add_subcommand("synth", "write the synthetic series as CSV");
    for (auto* cmd : {train, eval, forecast, attn, flops, synth}) add_common(cmd, f);
    for (auto* cmd : {eval, forecast, attn}) cmd->add_option("--checkpoint", f.checkpoint, "model checkpoint")->required();
    forecast->add_option("--input", f.input, "CSV with at least seq_len rows")->required();
    attn->add_option("--instance", f.instance, "window index in the test split");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : sc::kExitUsage;
    }

    sc::RunConfig cfg;
    try {
        cfg = resolve(f);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return sc::kExitUsage;
    }

    if (*train) return sc::cmd_train(cfg, std::cout, std::cerr);
    if (*eval) return sc::cmd_eval(cfg, f.checkpoint, std::cout, std::cerr);
    if (*forecast) return sc::cmd_forecast(cfg, f.checkpoint, f.input, std::cout, std::cerr);
    if (*attn) return sc::cmd_export_attention(cfg, f.checkpoint, f.instance, std::cout, std::cerr);
    if (*flops) return sc::cmd_flops(cfg, std::cout, std::cerr);
    return sc::cmd_synth(cfg, std::cout, std::cerr);
}
