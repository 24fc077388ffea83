#include "csiid/model.hpp"

#include <cmath>
#include <set>

namespace csiid {

using ad::Tensor;

void TransformerConfig::validate() const {
    if (d_model == 0 || heads == 0 || d_ff == 0 || window_len == 0 ||
        subcarriers == 0 || classes == 0 || encoder_layers == 0)
        throw InputError("model config fields must be positive");
    if (d_model % heads != 0)
        throw InputError("d_model (" + std::to_string(d_model) +
                         ") must be divisible by heads (" + std::to_string(heads) + ")");
    if (!(dropout >= 0.0 && dropout < 1.0))
        throw InputError("dropout must be in [0, 1)");
}

Mat sinusoidal_pe(std::size_t length, std::size_t d_model) {
    if (d_model % 2 != 0)
        throw InputError("sinusoidal_pe requires even d_model, got " +
                         std::to_string(d_model));
    Mat pe(length, d_model);
    for (std::size_t pos = 0; pos < length; ++pos)
        for (std::size_t i = 0; i < d_model / 2; ++i) {
            const double angle =
                static_cast<double>(pos) /
                std::pow(10000.0, 2.0 * static_cast<double>(i) /
                                      static_cast<double>(d_model));
            pe(pos, 2 * i) = std::sin(angle);
            pe(pos, 2 * i + 1) = std::cos(angle);
        }
    return pe;
}

namespace {

void check_unique_names(const std::vector<ad::Parameter>& params) {
    std::set<std::string> seen;
    for (const auto& p : params)
        if (!seen.insert(p.name).second)
            throw IntegrityError("duplicate parameter name: " + p.name);
}

// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights; biases start at zero.
Tensor init_weight(ad::Shape shape, std::size_t fan_in, Rng& rng,
                   const std::string& name, std::vector<ad::Parameter>& registry) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> values(ad::shape_numel(shape));
    for (double& v : values) v = rng.uniform(-bound, bound);
    Tensor t = Tensor::from_values(std::move(shape), std::move(values), true);
    registry.push_back({name, t});
    return t;
}

Tensor init_const(ad::Shape shape, double fill, const std::string& name,
                  std::vector<ad::Parameter>& registry) {
    Tensor t = Tensor::full(std::move(shape), fill, true);
    registry.push_back({name, t});
    return t;
}

}  // namespace

std::size_t Classifier::parameter_count() {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
}

void Classifier::load_parameter(const std::string& name,
                                const std::vector<double>& values) {
    for (auto& p : parameters()) {
        if (p.name != name) continue;
        if (p.tensor.numel() != values.size())
            throw ShapeError("parameter " + name + " expects " +
                             std::to_string(p.tensor.numel()) + " values, got " +
                             std::to_string(values.size()));
        p.tensor.values() = values;
        return;
    }
    throw IntegrityError("unknown parameter in checkpoint: " + name);
}

// ---- attention ----

MultiHeadAttention::MultiHeadAttention(const TransformerConfig& cfg,
                                       const std::string& prefix, Rng& rng,
                                       std::vector<ad::Parameter>& registry)
    : cfg_(cfg) {
    const std::size_t d = cfg.d_model;
    wq_ = init_weight({d, d}, d, rng, prefix + ".Wq", registry);
    wk_ = init_weight({d, d}, d, rng, prefix + ".Wk", registry);
    wv_ = init_weight({d, d}, d, rng, prefix + ".Wv", registry);
    wo_ = init_weight({d, d}, d, rng, prefix + ".Wo", registry);
}

ad::Tensor MultiHeadAttention::forward(const Tensor& h, ForwardTrace* trace) const {
    const std::size_t batch = h.dim(0);
    const std::size_t w = h.dim(1);
    const std::size_t d = cfg_.d_model;
    const std::size_t heads = cfg_.heads;
    const std::size_t dk = d / heads;

    auto split_heads = [&](const Tensor& t) {
        // B x W x d -> B x heads x W x dk
        return ad::swap_axes(ad::reshape(t, {batch, w, heads, dk}), 1, 2);
    };
    const Tensor q = split_heads(ad::matmul(h, wq_));
    const Tensor k = split_heads(ad::matmul(h, wk_));
    const Tensor v = split_heads(ad::matmul(h, wv_));

    const double scale_dim =
        cfg_.scale_full_dmodel ? static_cast<double>(d) : static_cast<double>(dk);
    const Tensor scores =
        ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(scale_dim));
    const Tensor attn = ad::softmax(scores);  // B x heads x W x W
    if (trace) trace->attention_weights.push_back(attn);

    const Tensor ctx = ad::matmul(attn, v);  // B x heads x W x dk
    const Tensor merged = ad::reshape(ad::swap_axes(ctx, 1, 2), {batch, w, d});
    return ad::matmul(merged, wo_);
}

// ---- encoder layer ----

EncoderLayer::EncoderLayer(const TransformerConfig& cfg, const std::string& prefix,
                           Rng& rng, std::vector<ad::Parameter>& registry)
    : cfg_(cfg), attention_(cfg, prefix + ".attn", rng, registry) {
    const std::size_t d = cfg.d_model;
    ln1_gain_ = init_const({d}, 1.0, prefix + ".ln1.gain", registry);
    ln1_bias_ = init_const({d}, 0.0, prefix + ".ln1.bias", registry);
    ffn_w1_ = init_weight({d, cfg.d_ff}, d, rng, prefix + ".ffn.W1", registry);
    ffn_b1_ = init_const({cfg.d_ff}, 0.0, prefix + ".ffn.b1", registry);
    ffn_w2_ = init_weight({cfg.d_ff, d}, cfg.d_ff, rng, prefix + ".ffn.W2", registry);
    ffn_b2_ = init_const({d}, 0.0, prefix + ".ffn.b2", registry);
    ln2_gain_ = init_const({d}, 1.0, prefix + ".ln2.gain", registry);
    ln2_bias_ = init_const({d}, 0.0, prefix + ".ln2.bias", registry);
}

ad::Tensor EncoderLayer::forward(const Tensor& h, bool training, Rng& rng,
                                 ForwardTrace* trace) const {
    Tensor attn_out = attention_.forward(h, trace);
    attn_out = ad::dropout(attn_out, cfg_.dropout, training, rng);
    const Tensor normed1 = ad::layer_norm_normalize(ad::add(h, attn_out), cfg_.ln_eps);
    if (trace) trace->ln_normalized.push_back(normed1);
    const Tensor h1 = ad::add(ad::mul(normed1, ln1_gain_), ln1_bias_);

    Tensor ffn = ad::relu(ad::add(ad::matmul(h1, ffn_w1_), ffn_b1_));
    ffn = ad::add(ad::matmul(ffn, ffn_w2_), ffn_b2_);
    ffn = ad::dropout(ffn, cfg_.dropout, training, rng);
    const Tensor normed2 = ad::layer_norm_normalize(ad::add(h1, ffn), cfg_.ln_eps);
    if (trace) trace->ln_normalized.push_back(normed2);
    return ad::add(ad::mul(normed2, ln2_gain_), ln2_bias_);
}

// ---- dual-branch model ----

DualBranchModel::DualBranchModel(const TransformerConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    auto build_branch = [&](Branch& b, const std::string& prefix) {
        b.in_w = init_weight({cfg_.subcarriers, cfg_.d_model}, cfg_.subcarriers, rng,
                             prefix + ".in.W", params_);
        b.in_b = init_const({cfg_.d_model}, 0.0, prefix + ".in.b", params_);
        for (std::size_t l = 0; l < cfg_.encoder_layers; ++l)
            b.layers.emplace_back(cfg_, prefix + ".enc" + std::to_string(l), rng,
                                  params_);
    };
    build_branch(amp_, "amp_branch");
    build_branch(ph_, "ph_branch");
    head_w_ = init_weight({2 * cfg_.d_model, cfg_.classes}, 2 * cfg_.d_model, rng,
                          "head.W", params_);
    head_b_ = init_const({cfg_.classes}, 0.0, "head.b", params_);
    pe_ = Tensor::from_mat(sinusoidal_pe(cfg_.window_len, cfg_.d_model));
    check_unique_names(params_);
}

ad::Tensor DualBranchModel::branch_forward(const Branch& b, const Tensor& x,
                                           bool training, Rng& rng,
                                           ForwardTrace* trace) const {
    Tensor h = ad::add(ad::matmul(x, b.in_w), b.in_b);
    if (cfg_.positional_encoding) h = ad::add(h, pe_);
    if (cfg_.dropout_after_input) h = ad::dropout(h, cfg_.dropout, training, rng);
    for (const auto& layer : b.layers) h = layer.forward(h, training, rng, trace);
    return ad::mean(h, 1);  // temporal mean pooling: B x d_model
}

ad::Tensor DualBranchModel::forward(const Tensor& amp, const Tensor& phase,
                                    bool training, Rng& rng, ForwardTrace* trace) {
    if (amp.ndim() != 3 || amp.shape() != phase.shape() ||
        amp.dim(1) != cfg_.window_len || amp.dim(2) != cfg_.subcarriers)
        throw ShapeError("dual_branch forward: amp " + ad::shape_str(amp.shape()) +
                         " phase " + ad::shape_str(phase.shape()) + ", expected BxWxK=Bx" +
                         std::to_string(cfg_.window_len) + "x" +
                         std::to_string(cfg_.subcarriers));
    const Tensor z_amp = branch_forward(amp_, amp, training, rng, trace);
    const Tensor z_ph = branch_forward(ph_, phase, training, rng, trace);
    const Tensor z = ad::concat(z_amp, z_ph);
    return ad::add(ad::matmul(z, head_w_), head_b_);
}

// ---- MLP baseline ----

MlpBaseline::MlpBaseline(const TransformerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    const std::size_t in_dim = 2 * cfg_.subcarriers;
    w1_ = init_weight({in_dim, cfg_.d_model}, in_dim, rng, "mlp.W1", params_);
    b1_ = init_const({cfg_.d_model}, 0.0, "mlp.b1", params_);
    w2_ = init_weight({cfg_.d_model, cfg_.classes}, cfg_.d_model, rng, "mlp.W2",
                      params_);
    b2_ = init_const({cfg_.classes}, 0.0, "mlp.b2", params_);
    check_unique_names(params_);
}

ad::Tensor MlpBaseline::forward(const Tensor& amp, const Tensor& phase, bool training,
                                Rng& rng, ForwardTrace*) {
    if (amp.ndim() != 3 || amp.shape() != phase.shape())
        throw ShapeError("mlp forward: amp " + ad::shape_str(amp.shape()) + " phase " +
                         ad::shape_str(phase.shape()));
    const Tensor x = ad::concat(ad::mean(amp, 1), ad::mean(phase, 1));  // B x 2K
    Tensor h = ad::relu(ad::add(ad::matmul(x, w1_), b1_));
    h = ad::dropout(h, cfg_.dropout, training, rng);
    return ad::add(ad::matmul(h, w2_), b2_);
}

// ---- CNN baseline ----

CnnBaseline::CnnBaseline(const TransformerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::size_t h = cfg_.window_len, w = cfg_.subcarriers;
    for (std::size_t s = 0; s < kConvStages; ++s) {
        h /= 2;
        w /= 2;
    }
    if (h == 0 || w == 0)
        throw InputError("cnn baseline: window " + std::to_string(cfg_.window_len) +
                         "x" + std::to_string(cfg_.subcarriers) +
                         " too small for three 2x2 poolings");
    flat_dim_ = kFeatureMaps * h * w;

    Rng rng(seed);
    std::size_t in_ch = 2;
    for (std::size_t s = 0; s < kConvStages; ++s) {
        const std::string name = "cnn.conv" + std::to_string(s);
        conv_w_.push_back(init_weight({kFeatureMaps, in_ch, 3, 3}, in_ch * 9, rng,
                                      name + ".W", params_));
        conv_b_.push_back(init_const({kFeatureMaps}, 0.0, name + ".b", params_));
        in_ch = kFeatureMaps;
    }
    w1_ = init_weight({flat_dim_, cfg_.d_model}, flat_dim_, rng, "cnn.W1", params_);
    b1_ = init_const({cfg_.d_model}, 0.0, "cnn.b1", params_);
    w2_ = init_weight({cfg_.d_model, cfg_.classes}, cfg_.d_model, rng, "cnn.W2",
                      params_);
    b2_ = init_const({cfg_.classes}, 0.0, "cnn.b2", params_);
    check_unique_names(params_);
}

ad::Tensor CnnBaseline::forward(const Tensor& amp, const Tensor& phase, bool training,
                                Rng& rng, ForwardTrace*) {
    if (amp.ndim() != 3 || amp.shape() != phase.shape())
        throw ShapeError("cnn forward: amp " + ad::shape_str(amp.shape()) + " phase " +
                         ad::shape_str(phase.shape()));
    Tensor x = ad::stack_pair(amp, phase);  // B x 2 x W x K
    for (std::size_t s = 0; s < kConvStages; ++s)
        x = ad::maxpool2x2(ad::relu(ad::conv2d(x, conv_w_[s], conv_b_[s], 1)));
    x = ad::reshape(x, {x.dim(0), flat_dim_});
    Tensor h = ad::relu(ad::add(ad::matmul(x, w1_), b1_));
    h = ad::dropout(h, cfg_.dropout, training, rng);
    return ad::add(ad::matmul(h, w2_), b2_);
}

std::unique_ptr<Classifier> make_model(const std::string& type,
                                       const TransformerConfig& cfg,
                                       std::uint64_t seed) {
    if (type == "transformer") return std::make_unique<DualBranchModel>(cfg, seed);
    if (type == "mlp") return std::make_unique<MlpBaseline>(cfg, seed);
    if (type == "cnn") return std::make_unique<CnnBaseline>(cfg, seed);
    throw InputError("unknown model type: " + type +
                     " (expected transformer, mlp, or cnn)");
}

}  // namespace csiid
