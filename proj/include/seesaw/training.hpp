#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "seesaw/data.hpp"
#include "seesaw/model.hpp"
#include "seesaw/tensor.hpp"

namespace seesaw {

/// Numerical failure during optimization (NaN/Inf gradient or loss).
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class LossMode { fredf, mse };

std::string_view to_string(LossMode m);
LossMode parse_loss_mode(std::string_view text);

struct TrainConfig {
    double lr = 1e-3;
    std::size_t epochs = 8;
    std::size_t batch_size = 32;
    LossMode loss = LossMode::fredf;
    double alpha = 0.5;
    std::size_t patience = 5;
    double clip_norm = 5.0;  // 0 disables clipping
    std::uint64_t seed = 2024;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Hybrid time/frequency MAE:
///   alpha * mean_k |F(y_hat)_k - F(y)_k| + (1 - alpha) * mean_t |y_hat_t - y_t|
/// with F the unnormalized real-input DFT over the last (horizon) axis and
/// the frequency mean taken over all H/2+1 bins of every row. A constant
/// error c therefore costs alpha * |c| * H / (H/2 + 1) in the frequency term.
Tensor fredf_loss(const Tensor& y_hat, const Tensor& y, double alpha);
Tensor mse_loss(const Tensor& y_hat, const Tensor& y);
Tensor mae_loss(const Tensor& y_hat, const Tensor& y);
Tensor training_loss(const Tensor& y_hat, const Tensor& y, LossMode mode, double alpha);

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
};

/// Mean squared and absolute error over all entries.
Metrics metrics(const Tensor& y_hat, const Tensor& y);

struct AdamState {
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;

    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient (a parameter with no gradient is treated as zero gradient).
/// Throws TrainingError naming the first parameter with a non-finite gradient.
void adam_step(std::span<const NamedTensor> params, AdamState& state, double lr);

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<const NamedTensor> params, double max_norm);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::optional<std::size_t> best_epoch;
    bool stopped_early = false;
    std::size_t train_windows = 0;
    std::size_t val_windows = 0;
    std::size_t test_windows = 0;
    Metrics test;
    Metrics baseline;  // repeat-last-value forecast on the test windows

    /// `key = value` text; see README for the schema.
    std::string serialize() const;
    static TrainReport parse(std::string_view text);
};

/// Test metrics of the repeat-last-value forecast.
Metrics repeat_last_baseline(const WindowDataset& windows);

/// Deterministic, dropout-free metrics over every window, in index order.
Metrics evaluate(const SeesawModel& model, const WindowDataset& windows, std::size_t batch_size = 64);

/// Mean training objective over the windows in eval mode.
double evaluate_loss(const SeesawModel& model, const WindowDataset& windows, const TrainConfig& cfg);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch training with seeded shuffling and dropout, early stopping on
/// validation loss, restoration of the best-validation parameters, and a
/// final test evaluation. Requires non-empty train and test sets, and a
/// non-empty validation set when epochs > 0.
TrainReport train(SeesawModel& model, const DatasetSplits& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace seesaw
