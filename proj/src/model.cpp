#include "seesaw/model.hpp"

#include <algorithm>
#include <numeric>

#include "seesaw/kv.hpp"
#include "seesaw/patching.hpp"

namespace seesaw {

namespace {

// Swaps the two axes just before the feature axis: [..., A, B, D] -> [..., B, A, D].
Tensor swap_token_axes(const Tensor& x) {
    std::vector<std::size_t> order(x.rank());
    std::iota(order.begin(), order.end(), 0);
    std::swap(order[x.rank() - 3], order[x.rank() - 2]);
    return permute(x, order);
}

Tensor small_uniform(Shape shape, double limit, std::mt19937_64& rng) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = (2.0 * uniform01(rng) - 1.0) * limit;
    return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace

std::string_view to_string(Ablation a) {
    switch (a) {
        case Ablation::full: return "full";
        case Ablation::no_sta: return "no_sta";
        case Ablation::no_non: return "no_non";
        case Ablation::no_gate: return "no_gate";
        case Ablation::no_pd: return "no_pd";
        case Ablation::no_cr: return "no_cr";
        case Ablation::cr_then_pd: return "cr_then_pd";
    }
    return "full";
}

const std::vector<Ablation>& all_ablations() {
    static const std::vector<Ablation> all{Ablation::full,  Ablation::no_sta, Ablation::no_non,    Ablation::no_gate,
                                           Ablation::no_pd, Ablation::no_cr,  Ablation::cr_then_pd};
    return all;
}

Ablation parse_ablation(std::string_view text) {
    for (Ablation a : all_ablations())
        if (to_string(a) == text) return a;
    throw UsageError("unknown ablation '" + std::string(text) +
                     "' (expected full, no_sta, no_non, no_gate, no_pd, no_cr or cr_then_pd)");
}

// ---------------------------------------------------------------------------
// ModelConfig

std::size_t ModelConfig::n_patches() const { return patch_count(seq_len, patch_len, stride); }

std::size_t ModelConfig::aggregated_patches() const {
    return n_prime == 0 ? (n_patches() + 1) / 2 : n_prime;
}

std::size_t ModelConfig::head_tokens() const {
    return uses_channel_stage() ? aggregated_patches() : n_patches();
}

GateMode ModelConfig::gate_mode() const {
    switch (ablation) {
        case Ablation::no_sta: return GateMode::nonstationary_only;
        case Ablation::no_non: return GateMode::stationary_only;
        case Ablation::no_gate: return GateMode::fixed_half;
        default: return GateMode::learned;
    }
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& m) { throw UsageError("model config: " + m); };
    if (channels == 0) fail("channels must be positive");
    if (seq_len < 2) fail("seq_len must be at least 2");
    if (pred_len == 0) fail("pred_len must be positive");
    if (stride == 0 || stride > patch_len) fail("need 1 <= stride <= patch_len");
    if (patch_len > seq_len) fail("patch_len must not exceed seq_len");
    if (d_model == 0 || heads == 0 || d_model % heads != 0) fail("d_model must be a positive multiple of heads");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
    const std::size_t np = aggregated_patches();
    if (np == 0 || np > n_patches())
        fail("n_prime must lie in [1, N] with N = " + std::to_string(n_patches()));
}

std::string ModelConfig::serialize() const {
    std::string s;
    auto line = [&s](std::string_view k, const std::string& v) {
        s += k;
        s += " = ";
        s += v;
        s += '\n';
    };
    line("channels", std::to_string(channels));
    line("seq_len", std::to_string(seq_len));
    line("pred_len", std::to_string(pred_len));
    line("patch_len", std::to_string(patch_len));
    line("stride", std::to_string(stride));
    line("d_model", std::to_string(d_model));
    line("heads", std::to_string(heads));
    line("d_ff", std::to_string(d_ff));
    line("dropout", kv::format_double(dropout));
    line("patch_layers", std::to_string(patch_layers));
    line("channel_layers", std::to_string(channel_layers));
    line("n_prime", std::to_string(n_prime));
    line("ablation", std::string(to_string(ablation)));
    line("seed", std::to_string(seed));
    return s;
}

bool ModelConfig::set(std::string_view key, std::string_view value) {
    if (key == "channels") channels = kv::parse_size(key, value);
    else if (key == "seq_len") seq_len = kv::parse_size(key, value);
    else if (key == "pred_len") pred_len = kv::parse_size(key, value);
    else if (key == "patch_len") patch_len = kv::parse_size(key, value);
    else if (key == "stride") stride = kv::parse_size(key, value);
    else if (key == "d_model") d_model = kv::parse_size(key, value);
    else if (key == "heads") heads = kv::parse_size(key, value);
    else if (key == "d_ff") d_ff = kv::parse_size(key, value);
    else if (key == "dropout") dropout = kv::parse_double(key, value);
    else if (key == "patch_layers") patch_layers = kv::parse_size(key, value);
    else if (key == "channel_layers") channel_layers = kv::parse_size(key, value);
    else if (key == "n_prime") n_prime = kv::parse_size(key, value);
    else if (key == "ablation") ablation = parse_ablation(value);
    else if (key == "seed") seed = kv::parse_u64(key, value);
    else return false;
    return true;
}

ModelConfig ModelConfig::parse(std::string_view text) {
    ModelConfig cfg;
    kv::for_each(text, [&cfg](std::string_view k, std::string_view v, std::size_t line) {
        if (!cfg.set(k, v))
            throw UsageError("model config line " + std::to_string(line) + ": unknown key '" + std::string(k) + "'");
    });
    return cfg;
}

// ---------------------------------------------------------------------------
// Layers

std::pair<Tensor, Tensor> patch_dependency_layer(const Tensor& p_sta, const Tensor& p_non, const AsnaParams& params,
                                                 const AsnaOptions& options, std::optional<AsnaDiagnostics>* diag) {
    if (p_sta.rank() < 3) throw DimensionError("patch_dependency_layer: expected [..., C, N, D], got " + shape_str(p_sta.shape()));
    // Leading axes of the ASNA call are independent sequences, so batching
    // over channels is the same as looping over them with shared weights.
    AsnaOutput out = asna_forward(p_sta, p_non, params, options);
    if (diag) *diag = std::move(out.diag);
    return {std::move(out.z_sta), std::move(out.z_non)};
}

Tensor temporal_aggregate(const Tensor& p, const Tensor& w_agg) {
    if (p.rank() < 3 || w_agg.rank() != 2 || w_agg.dim(1) != p.dim(-2))
        throw DimensionError("temporal_aggregate: incompatible shapes " + shape_str(p.shape()) + " and " +
                             shape_str(w_agg.shape()));
    return matmul(w_agg, p);
}

std::pair<Tensor, Tensor> channel_relationship_layer(const Tensor& q_sta, const Tensor& q_non,
                                                     const AsnaParams& params, const AsnaOptions& options,
                                                     std::optional<AsnaDiagnostics>* diag) {
    if (q_sta.rank() < 3) throw DimensionError("channel_relationship_layer: expected [..., C, N', D], got " + shape_str(q_sta.shape()));
    AsnaOutput out = asna_forward(swap_token_axes(q_sta), swap_token_axes(q_non), params, options);
    if (diag) *diag = std::move(out.diag);
    return {swap_token_axes(out.z_sta), swap_token_axes(out.z_non)};
}

Tensor flatten_predict(const Tensor& q_sta, const Tensor& w_head, const Tensor& b_head) {
    if (q_sta.rank() < 3 || w_head.rank() != 2 || w_head.dim(0) != q_sta.dim(-2) * q_sta.dim(-1))
        throw DimensionError("flatten_predict: incompatible shapes " + shape_str(q_sta.shape()) + " and " +
                             shape_str(w_head.shape()));
    Shape flat(q_sta.shape().begin(), q_sta.shape().end() - 2);
    flat.push_back(q_sta.dim(-2) * q_sta.dim(-1));
    return add(matmul(reshape(q_sta, flat), w_head), b_head);
}

// ---------------------------------------------------------------------------
// SeesawModel

SeesawModel::SeesawModel(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(config_.seed);
    const std::size_t p = config_.patch_len, d = config_.d_model, n = config_.n_patches();
    const std::size_t np = config_.aggregated_patches();

    embed_sta = {xavier_uniform(p, d, rng), small_uniform({n, d}, 0.02, rng)};
    embed_non = {xavier_uniform(p, d, rng), small_uniform({n, d}, 0.02, rng)};
    if (config_.uses_patch_layers())
        for (std::size_t i = 0; i < config_.patch_layers; ++i)
            patch_blocks.push_back(AsnaParams::init(d, config_.heads, config_.ffn_width(), config_.dropout, rng));
    if (config_.uses_channel_stage()) {
        agg_sta = xavier_uniform(np, n, rng);
        agg_non = xavier_uniform(np, n, rng);
        for (std::size_t i = 0; i < config_.channel_layers; ++i)
            channel_blocks.push_back(AsnaParams::init(d, config_.heads, config_.ffn_width(), config_.dropout, rng));
    }
    head_w = xavier_uniform(config_.head_tokens() * d, config_.pred_len, rng);
    head_b = Tensor::zeros({config_.pred_len}, true);
    collect_parameters();
}

void SeesawModel::collect_parameters() {
    params_.clear();
    params_.emplace_back("embed.sta.weight", embed_sta.weight);
    params_.emplace_back("embed.sta.pos", embed_sta.pos);
    params_.emplace_back("embed.non.weight", embed_non.weight);
    params_.emplace_back("embed.non.pos", embed_non.pos);
    for (std::size_t i = 0; i < patch_blocks.size(); ++i)
        for (auto& [name, t] : patch_blocks[i].named()) params_.emplace_back("patch." + std::to_string(i) + "." + name, t);
    if (config_.uses_channel_stage()) {
        params_.emplace_back("agg.sta", agg_sta);
        params_.emplace_back("agg.non", agg_non);
    }
    for (std::size_t i = 0; i < channel_blocks.size(); ++i)
        for (auto& [name, t] : channel_blocks[i].named())
            params_.emplace_back("channel." + std::to_string(i) + "." + name, t);
    params_.emplace_back("head.weight", head_w);
    params_.emplace_back("head.bias", head_b);
}

std::size_t SeesawModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.numel();
    return n;
}

Tensor SeesawModel::parameter(std::string_view name) const {
    for (const auto& [n, t] : params_)
        if (n == name) return t;
    throw UsageError("model: no parameter named '" + std::string(name) + "'");
}

void SeesawModel::zero_grad() {
    for (auto& [_, t] : params_) Tensor(t).zero_grad();
}

std::vector<std::vector<double>> SeesawModel::snapshot() const {
    std::vector<std::vector<double>> out;
    out.reserve(params_.size());
    for (const auto& [_, t] : params_) out.emplace_back(t.data().begin(), t.data().end());
    return out;
}

void SeesawModel::load_values(const std::vector<std::vector<double>>& values) {
    if (values.size() != params_.size()) throw UsageError("model: parameter snapshot has wrong length");
    for (std::size_t i = 0; i < values.size(); ++i) {
        Tensor t = params_[i].second;
        auto dst = t.mutable_data();
        if (values[i].size() != dst.size())
            throw UsageError("model: snapshot size mismatch for " + params_[i].first);
        std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
}

ForwardResult SeesawModel::forward(const Tensor& x, const ForwardOptions& options) const {
    const bool single = x.rank() == 2;
    if ((x.rank() != 2 && x.rank() != 3) || x.dim(-2) != config_.channels || x.dim(-1) != config_.seq_len)
        throw UsageError("forward: expected input [C=" + std::to_string(config_.channels) +
                         ", L=" + std::to_string(config_.seq_len) + "] (optionally batched), got " +
                         shape_str(x.shape()));
    const Tensor xb = single ? reshape(x, {1, x.dim(0), x.dim(1)}) : x;

    const AsnaOptions opt{options.train, options.gate_override.value_or(config_.gate_mode()), options.capture,
                          options.rng};
    ForwardResult result;
    auto record = [&](LayerDiagnostics::Kind kind, std::size_t layer, std::optional<AsnaDiagnostics>& d) {
        if (d) result.diag.push_back({kind, layer, std::move(*d)});
    };

    const NormalizedInput norm = in_norm(xb);
    Tensor z_sta = embed(patchify(norm.x_sta, config_.patch_len, config_.stride), embed_sta.weight, embed_sta.pos).values;
    Tensor z_non = embed(patchify(xb, config_.patch_len, config_.stride), embed_non.weight, embed_non.pos).values;

    auto run_patch_layers = [&] {
        for (std::size_t i = 0; i < patch_blocks.size(); ++i) {
            std::optional<AsnaDiagnostics> d;
            std::tie(z_sta, z_non) = patch_dependency_layer(z_sta, z_non, patch_blocks[i], opt, &d);
            record(LayerDiagnostics::Kind::patch, i, d);
        }
    };
    auto run_channel_stage = [&] {
        z_sta = temporal_aggregate(z_sta, agg_sta);
        z_non = temporal_aggregate(z_non, agg_non);
        for (std::size_t i = 0; i < channel_blocks.size(); ++i) {
            std::optional<AsnaDiagnostics> d;
            std::tie(z_sta, z_non) = channel_relationship_layer(z_sta, z_non, channel_blocks[i], opt, &d);
            record(LayerDiagnostics::Kind::channel, i, d);
        }
    };

    if (config_.ablation == Ablation::cr_then_pd) {
        run_channel_stage();
        run_patch_layers();
    } else {
        run_patch_layers();
        if (config_.uses_channel_stage()) run_channel_stage();
    }

    Tensor y = in_denorm(flatten_predict(z_sta, head_w, head_b), norm.stats);
    result.y_hat = single ? reshape(y, {config_.channels, config_.pred_len}) : y;
    return result;
}

}  // namespace seesaw
