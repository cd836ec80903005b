#include "seesaw/asna.hpp"

#include <cmath>
#include <numeric>

namespace seesaw {

namespace {

// [..., T, D] -> [..., heads, T, d_h]
Tensor split_heads(const Tensor& x, std::size_t heads) {
    Shape s = x.shape();
    const std::size_t d = s.back();
    s.back() = heads;
    s.push_back(d / heads);
    const Tensor r = reshape(x, s);
    std::vector<std::size_t> order(r.rank());
    std::iota(order.begin(), order.end(), 0);
    std::swap(order[r.rank() - 3], order[r.rank() - 2]);
    return permute(r, order);
}

// [..., heads, T, d_h] -> [..., T, D]
Tensor merge_heads(const Tensor& x) {
    std::vector<std::size_t> order(x.rank());
    std::iota(order.begin(), order.end(), 0);
    std::swap(order[x.rank() - 3], order[x.rank() - 2]);
    const Tensor p = permute(x, order);
    Shape s(p.shape().begin(), p.shape().end() - 1);
    s.back() *= p.shape().back();
    return reshape(p, s);
}

Tensor feed_forward(const Tensor& x, const FeedForwardParams& f, double p, const AsnaOptions& opt) {
    Tensor h = gelu(add(matmul(x, f.w1), f.b1));
    if (opt.train) h = dropout(h, p, true, *opt.rng);
    Tensor y = add(matmul(h, f.w2), f.b2);
    if (opt.train) y = dropout(y, p, true, *opt.rng);
    return y;
}

void check_stream(const Tensor& z, const AsnaParams& p, const char* what) {
    if (z.rank() < 2 || z.dim(-1) != p.d_model)
        throw DimensionError(std::string("asna: ") + what + " stream " + shape_str(z.shape()) +
                             " does not end in d_model=" + std::to_string(p.d_model));
}

FeedForwardParams init_ffn(std::size_t d, std::size_t d_ff, std::mt19937_64& rng) {
    FeedForwardParams f;
    f.w1 = xavier_uniform(d, d_ff, rng);
    f.b1 = Tensor::zeros({d_ff}, true);
    f.w2 = xavier_uniform(d_ff, d, rng);
    f.b2 = Tensor::zeros({d}, true);
    return f;
}

LayerNormParams init_norm(std::size_t d) { return {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)}; }

}  // namespace

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Tensor xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = (2.0 * uniform01(rng) - 1.0) * limit;
    return Tensor({rows, cols}, std::move(v), true);
}

AsnaParams AsnaParams::init(std::size_t d_model, std::size_t heads, std::size_t d_ff, double dropout,
                            std::mt19937_64& rng) {
    if (heads == 0 || d_model % heads != 0)
        throw UsageError("asna: d_model " + std::to_string(d_model) + " not divisible by heads " +
                         std::to_string(heads));
    AsnaParams p;
    p.d_model = d_model;
    p.heads = heads;
    p.d_ff = d_ff;
    p.dropout = dropout;
    p.wq_sta = xavier_uniform(d_model, d_model, rng);
    p.wk_sta = xavier_uniform(d_model, d_model, rng);
    p.wq_non = xavier_uniform(d_model, d_model, rng);
    p.wk_non = xavier_uniform(d_model, d_model, rng);
    p.wv = xavier_uniform(d_model, d_model, rng);
    p.wo = xavier_uniform(d_model, d_model, rng);
    p.wg = xavier_uniform(2 * d_model, heads, rng);
    p.bg = Tensor::zeros({heads}, true);
    p.ffn_sta = init_ffn(d_model, d_ff, rng);
    p.ffn_non = init_ffn(d_model, d_ff, rng);
    p.norm_attn = init_norm(d_model);
    p.norm_sta = init_norm(d_model);
    p.norm_non = init_norm(d_model);
    return p;
}

std::vector<NamedTensor> AsnaParams::named() const {
    return {
        {"wq_sta", wq_sta},
        {"wk_sta", wk_sta},
        {"wq_non", wq_non},
        {"wk_non", wk_non},
        {"wv", wv},
        {"wo", wo},
        {"gate.weight", wg},
        {"gate.bias", bg},
        {"ffn_sta.w1", ffn_sta.w1},
        {"ffn_sta.b1", ffn_sta.b1},
        {"ffn_sta.w2", ffn_sta.w2},
        {"ffn_sta.b2", ffn_sta.b2},
        {"ffn_non.w1", ffn_non.w1},
        {"ffn_non.b1", ffn_non.b1},
        {"ffn_non.w2", ffn_non.w2},
        {"ffn_non.b2", ffn_non.b2},
        {"norm_attn.gain", norm_attn.gain},
        {"norm_attn.bias", norm_attn.bias},
        {"norm_sta.gain", norm_sta.gain},
        {"norm_sta.bias", norm_sta.bias},
        {"norm_non.gain", norm_non.gain},
        {"norm_non.bias", norm_non.bias},
    };
}

Tensor branch_scores(const Tensor& z, const Tensor& w_q, const Tensor& w_k, std::size_t heads) {
    if (z.rank() < 2 || heads == 0 || z.dim(-1) % heads != 0)
        throw DimensionError("branch_scores: stream " + shape_str(z.shape()) + " cannot split into " +
                             std::to_string(heads) + " heads");
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(z.dim(-1) / heads));
    const Tensor q = split_heads(matmul(z, w_q), heads);
    const Tensor k = split_heads(matmul(z, w_k), heads);
    return softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_dh));
}

Tensor compute_gate(const Tensor& z_sta, const Tensor& z_non, const Tensor& w_g, const Tensor& b_g) {
    return sigmoid(add(matmul(concat_features(z_sta, z_non), w_g), b_g));
}

Tensor fuse_scores(const Tensor& a_sta, const Tensor& a_non, const Tensor& gate) {
    const Tensor g = transpose(gate);  // [..., heads, T]
    return add(mul_rows(a_sta, add_scalar(scale(g, -1.0), 1.0)), mul_rows(a_non, g));
}

Tensor fused_attention(const Tensor& a_sta, const Tensor& a_non, const Tensor& gate, const Tensor& z_sta,
                       const Tensor& w_v, const Tensor& w_o, std::size_t heads) {
    const Tensor mixed = fuse_scores(a_sta, a_non, gate);
    const Tensor v = split_heads(matmul(z_sta, w_v), heads);
    return matmul(merge_heads(matmul(mixed, v)), w_o);
}

AsnaOutput asna_forward(const Tensor& z_sta, const Tensor& z_non, const AsnaParams& params,
                        const AsnaOptions& options) {
    check_stream(z_sta, params, "stationary");
    check_stream(z_non, params, "non-stationary");
    if (z_sta.shape() != z_non.shape())
        throw DimensionError("asna: stream shapes differ: " + shape_str(z_sta.shape()) + " vs " +
                             shape_str(z_non.shape()));
    const bool drop = options.train && params.dropout > 0.0;
    if (drop && options.rng == nullptr) throw UsageError("asna: train mode with dropout needs an RNG");

    const Tensor a_sta = branch_scores(z_sta, params.wq_sta, params.wk_sta, params.heads);
    const Tensor a_non = branch_scores(z_non, params.wq_non, params.wk_non, params.heads);

    Tensor gate;
    if (options.gate == GateMode::learned) {
        gate = compute_gate(z_sta, z_non, params.wg, params.bg);
    } else {
        Shape gs(z_sta.shape().begin(), z_sta.shape().end() - 1);
        gs.push_back(params.heads);
        const double value = options.gate == GateMode::stationary_only      ? 0.0
                             : options.gate == GateMode::nonstationary_only ? 1.0
                                                                            : 0.5;
        gate = Tensor::full(std::move(gs), value);
    }

    const Tensor o = fused_attention(a_sta, a_non, gate, z_sta, params.wv, params.wo, params.heads);
    const AsnaOptions ffn_opt{drop, options.gate, false, options.rng};
    const Tensor o_drop = drop ? dropout(o, params.dropout, true, *options.rng) : o;
    const Tensor z_tmp = layer_norm(add(z_sta, o_drop), params.norm_attn.gain, params.norm_attn.bias);
    Tensor z_sta_out = layer_norm(add(z_tmp, feed_forward(z_tmp, params.ffn_sta, params.dropout, ffn_opt)),
                                  params.norm_sta.gain, params.norm_sta.bias);
    Tensor z_non_out = layer_norm(add(z_non, feed_forward(o, params.ffn_non, params.dropout, ffn_opt)),
                                  params.norm_non.gain, params.norm_non.bias);

    AsnaOutput out{std::move(z_sta_out), std::move(z_non_out), std::nullopt};
    if (options.capture) out.diag = AsnaDiagnostics{a_sta.detach(), a_non.detach(), gate.detach()};
    return out;
}

}  // namespace seesaw
