#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "seesaw/tensor.hpp"

namespace seesaw {

/// Malformed input file: unparsable cell, ragged row, missing header.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RawSeries {
    std::vector<std::string> channel_names;
    Tensor values;                        // [C, Total]
    std::vector<std::string> timestamps;  // empty when the file has no date column
    std::vector<std::string> diagnostics;  // rows dropped during ingestion

    std::size_t channels() const { return values.dim(0); }
    std::size_t length() const { return values.dim(1); }
};

/// Header row required. A first column named "date" (any case) becomes
/// timestamps. Rows containing NaN or empty cells are dropped and reported
/// in `diagnostics`; any other unparsable cell is a FormatError naming the
/// 1-based data row and the column.
RawSeries parse_csv(std::istream& in, const std::string& source = "<stream>");
RawSeries load_csv(const std::filesystem::path& path);

/// Writes [C, T] values with a header row of channel names (plus a leading
/// date column when timestamps has T entries).
void write_csv(std::ostream& out, const std::vector<std::string>& channel_names, const Tensor& values,
               const std::vector<std::string>& timestamps = {});

struct IndexRange {
    std::size_t start = 0;
    std::size_t end = 0;  // exclusive

    std::size_t size() const { return end - start; }
    bool empty() const { return end <= start; }
    bool operator==(const IndexRange&) const = default;
};

struct SplitRatios {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;

    bool operator==(const SplitRatios&) const = default;
};

struct SplitRanges {
    IndexRange train, val, test;  // val/test start L-1 points early
};

/// Contiguous chronological split. Segment sizes are floor(total * ratio);
/// when the ratios sum to 1 the test segment absorbs rounding and ends at
/// `total`. Validation and test ranges are then extended backwards by
/// L - 1 points so their first window's input may reach into the previous
/// segment while every target stays inside the segment. A zero ratio gives
/// an empty range; any non-empty range shorter than L + H is a UsageError.
SplitRanges chronological_split(std::size_t total, const SplitRatios& ratios, std::size_t seq_len,
                                std::size_t pred_len);

enum class SplitTag { train, val, test };

struct SeriesInstance {
    Tensor x;  // [C, L]
    Tensor y;  // [C, H]
};

/// Stride-1 windows over one range of a shared series.
class WindowDataset {
public:
    WindowDataset() = default;
    WindowDataset(std::shared_ptr<const RawSeries> series, IndexRange range, std::size_t seq_len,
                  std::size_t pred_len, SplitTag tag);

    std::size_t size() const { return count_; }
    bool empty() const { return count_ == 0; }
    SplitTag tag() const { return tag_; }
    std::size_t seq_len() const { return seq_len_; }
    std::size_t pred_len() const { return pred_len_; }
    std::size_t channels() const { return series_ ? series_->channels() : 0; }
    IndexRange range() const { return range_; }

    /// Absolute index of window i's first input point.
    std::size_t start(std::size_t i) const;
    SeriesInstance instance(std::size_t i) const;
    /// Stacks the selected windows into x [B, C, L] and y [B, C, H].
    SeriesInstance batch(std::span<const std::size_t> indices) const;

private:
    std::shared_ptr<const RawSeries> series_;
    IndexRange range_;
    std::size_t seq_len_ = 0;
    std::size_t pred_len_ = 0;
    std::size_t count_ = 0;
    SplitTag tag_ = SplitTag::train;
};

WindowDataset make_windows(std::shared_ptr<const RawSeries> series, IndexRange range, std::size_t seq_len,
                           std::size_t pred_len, SplitTag tag = SplitTag::train);

struct DatasetSplits {
    WindowDataset train, val, test;
};

DatasetSplits make_splits(std::shared_ptr<const RawSeries> series, const SplitRatios& ratios, std::size_t seq_len,
                          std::size_t pred_len);

struct SynthSpec {
    std::size_t channels = 4;
    std::size_t total = 4000;
    std::uint64_t seed = 7;
    std::size_t regime_period = 400;
    double trend_scale = 1.0;
    double noise_std = 0.1;

    bool operator==(const SynthSpec&) const = default;
};

/// Synthetic non-stationary series. For channel c at step t:
///
///   x_c(t) = level_c
///          + amp_c * s_c(t) * base(t)
///          + 0.5 * sin(2 pi t / own_period_c + phase_c)
///          + trend_scale * slope_c * t / 100
///          + noise_std * N(0, 1)
///
/// base(t) = sin(2 pi t / 24) + 0.5 sin(2 pi t / 12 + 0.7) is shared by all
/// channels. s_c(t) = +1 for even c; for odd c it alternates between +1 and
/// -1 every regime_period steps, so the coupling between channel 0 and any
/// odd channel reverses from one regime to the next. own_period_c is 48 for
/// even c and 96 for odd c. level_c ~ U[-5, 5], amp_c ~ U[1, 3],
/// slope_c ~ U[-1, 1] and phase_c ~ U[0, 2 pi), all drawn from the seed.
RawSeries synth_generate(const SynthSpec& spec);

}  // namespace seesaw
