#pragma once

#include <cstddef>
#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "seesaw/data.hpp"
#include "seesaw/model.hpp"
#include "seesaw/training.hpp"

namespace seesaw::cli {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // numerical or I/O failure during a run
inline constexpr int kExitUsage = 2;    // invalid config, data, or arguments

/// Everything a run needs. Loaded from a `key = value` file, then flags.
///
/// `data` empty means: generate a synthetic series from `synth`.
/// The shared `seed` drives parameter init, shuffling and dropout.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    SplitRatios split;
    SynthSpec synth;
    std::string data;
    std::string out = "seesaw_out";
    std::uint64_t seed = 2024;

    /// Applies one key; throws UsageError for unknown keys or bad values.
    void set(std::string_view key, std::string_view value);
    /// Cross-field validation; runs before any compute.
    void validate() const;
    /// Effective configuration, one `key = value` line per field. Parsing
    /// this text yields an identical RunConfig.
    std::string serialize() const;
    static RunConfig parse(std::string_view text);
    static RunConfig load(const std::filesystem::path& path);

    bool operator==(const RunConfig&) const = default;
};

/// Loads the configured series (CSV or synthetic).
RawSeries load_series(const RunConfig& cfg);

/// Model config for this run with the channel count taken from the data.
ModelConfig resolve_model(const RunConfig& cfg, std::size_t channels);

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& out, std::ostream& err);
int cmd_forecast(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& input,
                 std::ostream& out, std::ostream& err);
int cmd_export_attention(const RunConfig& cfg, const std::filesystem::path& checkpoint, std::size_t instance,
                         std::ostream& out, std::ostream& err);
int cmd_flops(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_synth(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Forecast for the trailing seq_len rows of `input`: [C, H] in raw scale.
Tensor forecast_tail(const SeesawModel& model, const RawSeries& input);

/// Writes a square matrix as CSV (one row per line, full precision).
void write_matrix_csv(const std::filesystem::path& path, std::span<const double> values, std::size_t rows,
                      std::size_t cols);
/// Writes an ASCII 8-bit PGM (P2). Values map linearly from [min, max] to
/// [0, 255] with round-to-nearest; a constant matrix maps to 0. The
/// scaling and the min/max are recorded in a header comment.
void write_matrix_pgm(const std::filesystem::path& path, std::span<const double> values, std::size_t rows,
                      std::size_t cols);

struct ExportedMaps {
    std::vector<std::filesystem::path> files;
};

/// Writes attention maps and stationary gate weights for one instance
/// (see README for file naming). Returns every file written.
ExportedMaps export_attention(const SeesawModel& model, const Tensor& x, const std::filesystem::path& dir);

/// Reads the log level from SEESAW_LOG (quiet, info, debug).
void init_logging();

/// Keeps large tensor buffers in the heap instead of fresh mmap pages
/// (glibc only; no-op elsewhere).
void configure_allocator();

}  // namespace seesaw::cli
