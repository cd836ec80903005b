#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "seesaw/asna.hpp"
#include "seesaw/normalization.hpp"
#include "seesaw/tensor.hpp"

namespace seesaw {

/// Architecture variants used for ablation studies.
enum class Ablation {
    full,
    no_sta,      // gate forced to 1: only non-stationary scores
    no_non,      // gate forced to 0: only stationary scores
    no_gate,     // gate fixed at 0.5
    no_pd,       // no patch dependency layers
    no_cr,       // no temporal aggregation and no channel layers
    cr_then_pd,  // aggregation, channel layers, then patch layers on N' tokens
};

std::string_view to_string(Ablation a);
Ablation parse_ablation(std::string_view text);
const std::vector<Ablation>& all_ablations();

struct ModelConfig {
    std::size_t channels = 1;
    std::size_t seq_len = 96;
    std::size_t pred_len = 24;
    std::size_t patch_len = 16;
    std::size_t stride = 8;
    std::size_t d_model = 64;
    std::size_t heads = 4;
    std::size_t d_ff = 0;  // 0 selects 4 * d_model
    double dropout = 0.1;
    std::size_t patch_layers = 2;
    std::size_t channel_layers = 1;
    std::size_t n_prime = 0;  // 0 selects ceil(N / 2)
    Ablation ablation = Ablation::full;
    std::uint64_t seed = 2024;

    std::size_t n_patches() const;
    std::size_t aggregated_patches() const;
    std::size_t ffn_width() const { return d_ff == 0 ? 4 * d_model : d_ff; }
    bool uses_patch_layers() const { return ablation != Ablation::no_pd && patch_layers > 0; }
    bool uses_channel_stage() const { return ablation != Ablation::no_cr; }
    /// Patch tokens per channel that reach the prediction head.
    std::size_t head_tokens() const;
    GateMode gate_mode() const;

    /// Throws UsageError describing the first violated constraint.
    void validate() const;

    /// One `key = value` line per field, in a fixed order.
    std::string serialize() const;
    static ModelConfig parse(std::string_view text);
    /// Applies one key/value pair; returns false for an unknown key.
    bool set(std::string_view key, std::string_view value);

    bool operator==(const ModelConfig&) const = default;
};

struct EmbeddingParams {
    Tensor weight;  // [P, D]
    Tensor pos;     // [N, D]
};

struct ForwardOptions {
    bool train = false;
    std::mt19937_64* rng = nullptr;
    bool capture = false;
    /// Replaces the gate mode implied by the ablation.
    std::optional<GateMode> gate_override;
};

struct LayerDiagnostics {
    enum class Kind { patch, channel };
    Kind kind;
    std::size_t layer;
    /// For patch layers leading axes are [B, C]; for channel layers [B, N'].
    AsnaDiagnostics maps;
};

struct ForwardResult {
    Tensor y_hat;  // [C, H] or [B, C, H], matching the input's rank
    std::vector<LayerDiagnostics> diag;
};

/// Per channel, ASNA over the N patch tokens. Inputs [..., C, N, D].
std::pair<Tensor, Tensor> patch_dependency_layer(const Tensor& p_sta, const Tensor& p_non, const AsnaParams& params,
                                                 const AsnaOptions& options,
                                                 std::optional<AsnaDiagnostics>* diag = nullptr);

/// out[..., c, :, d] = w_agg * p[..., c, :, d]; w_agg is [N', N].
Tensor temporal_aggregate(const Tensor& p, const Tensor& w_agg);

/// Per patch position, ASNA over the C channel tokens. Inputs [..., C, N', D].
std::pair<Tensor, Tensor> channel_relationship_layer(const Tensor& q_sta, const Tensor& q_non,
                                                     const AsnaParams& params, const AsnaOptions& options,
                                                     std::optional<AsnaDiagnostics>* diag = nullptr);

/// Flattens each channel's [N', D] latent and applies the shared linear
/// head: [..., C, N', D] -> [..., C, H].
Tensor flatten_predict(const Tensor& q_sta, const Tensor& w_head, const Tensor& b_head);

class SeesawModel {
public:
    explicit SeesawModel(ModelConfig config);

    const ModelConfig& config() const { return config_; }

    /// x is [C, L] or [B, C, L] in raw scale; the forecast is in raw scale.
    ForwardResult forward(const Tensor& x, const ForwardOptions& options = {}) const;

    /// Every trainable tensor in a fixed order. Handles share storage with
    /// the model, so writing through them updates it.
    const std::vector<NamedTensor>& parameters() const { return params_; }
    std::size_t parameter_count() const;
    Tensor parameter(std::string_view name) const;

    void zero_grad();
    /// Overwrites every parameter's values from `values` (same order/shapes).
    void load_values(const std::vector<std::vector<double>>& values);
    std::vector<std::vector<double>> snapshot() const;

    EmbeddingParams embed_sta, embed_non;
    std::vector<AsnaParams> patch_blocks;
    std::vector<AsnaParams> channel_blocks;
    Tensor agg_sta, agg_non;  // [N', N]
    Tensor head_w, head_b;    // [head_tokens * D, H], [H]

private:
    void collect_parameters();

    ModelConfig config_;
    std::vector<NamedTensor> params_;
};

/// Checkpoint I/O. Layout (all integers little-endian):
///   8 bytes  magic "SEESAWCK"
///   u32      format version (1)
///   u32      byte length of the config text, then the text
///            (ModelConfig::serialize output, UTF-8)
///   u32      parameter count
///   per parameter:
///     u32 name length, name bytes
///     u32 rank, then rank x u64 dimensions
///     numel x f64 (IEEE-754 binary64, little-endian), row-major
std::string checkpoint_bytes(const SeesawModel& model);
SeesawModel model_from_checkpoint_bytes(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const SeesawModel& model);
SeesawModel load_checkpoint(const std::filesystem::path& path);

/// Thrown for malformed or incompatible checkpoint files.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace seesaw
