#include "seesaw/flops.hpp"

namespace seesaw {

AttentionFlops& AttentionFlops::operator+=(const AttentionFlops& o) {
    score += o.score;
    projection += o.projection;
    aggregation += o.aggregation;
    return *this;
}

AttentionFlops single_branch_flops(std::size_t tokens, std::size_t d_model, std::size_t heads) {
    const double t = static_cast<double>(tokens), d = static_cast<double>(d_model), h = static_cast<double>(heads);
    AttentionFlops f;
    f.score = 2.0 * t * t * d + 5.0 * h * t * t;
    f.projection = 4.0 * (2.0 * t * d * d);
    f.aggregation = 2.0 * t * t * d;
    return f;
}

AttentionFlops asna_flops(std::size_t tokens, std::size_t d_model, std::size_t heads) {
    const double t = static_cast<double>(tokens), d = static_cast<double>(d_model), h = static_cast<double>(heads);
    AttentionFlops f;
    f.score = 2.0 * (2.0 * t * t * d + 5.0 * h * t * t) + 3.0 * h * t * t + h * t;
    // Q and K for both branches, shared V and O, plus the gate projection.
    f.projection = 6.0 * (2.0 * t * d * d) + 2.0 * t * (2.0 * d) * h + 5.0 * t * h;
    f.aggregation = 2.0 * t * t * d;
    return f;
}

AttentionFlops ModelFlops::asna_total() const {
    AttentionFlops f = asna_patch;
    f += asna_channel;
    return f;
}

AttentionFlops ModelFlops::single_total() const {
    AttentionFlops f = single_patch;
    f += single_channel;
    return f;
}

double ModelFlops::score_ratio() const { return asna_total().score / single_total().score; }

ModelFlops count_model_flops(const ModelConfig& cfg) {
    cfg.validate();
    ModelFlops m;
    const std::size_t c = cfg.channels, d = cfg.d_model, h = cfg.heads;
    if (cfg.uses_patch_layers()) {
        const std::size_t tokens =
            cfg.ablation == Ablation::cr_then_pd ? cfg.aggregated_patches() : cfg.n_patches();
        for (std::size_t i = 0; i < cfg.patch_layers * c; ++i) {
            m.asna_patch += asna_flops(tokens, d, h);
            m.single_patch += single_branch_flops(tokens, d, h);
        }
    }
    if (cfg.uses_channel_stage()) {
        for (std::size_t i = 0; i < cfg.channel_layers * cfg.aggregated_patches(); ++i) {
            m.asna_channel += asna_flops(c, d, h);
            m.single_channel += single_branch_flops(c, d, h);
        }
    }
    return m;
}

}  // namespace seesaw
