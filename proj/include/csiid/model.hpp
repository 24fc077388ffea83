// Dual-branch transformer classifier over amplitude and phase windows, plus
// MLP and CNN baselines sharing the same classifier interface.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "csiid/autodiff.hpp"
#include "csiid/rng.hpp"

namespace csiid {

struct TransformerConfig {
    std::size_t d_model = 32;
    std::size_t heads = 4;
    std::size_t d_ff = 64;
    double dropout = 0.2;
    std::size_t window_len = 100;  // W
    std::size_t subcarriers = 52;  // K
    std::size_t classes = 6;       // N
    std::size_t encoder_layers = 1;
    double ln_eps = 1e-5;
    // Attention logits are scaled by sqrt(d_model / heads) per head; this
    // flag switches to a literal sqrt(d_model).
    bool scale_full_dmodel = false;
    bool positional_encoding = true;  // test hook: disable to check equivariance
    bool dropout_after_input = false;

    void validate() const;
};

// PE[pos][2i] = sin(pos / 10000^(2i/d)), PE[pos][2i+1] = cos of the same.
// d_model must be even.
Mat sinusoidal_pe(std::size_t length, std::size_t d_model);

// Optional capture of internals for tests: attention weights after softmax
// (B x heads x W x W) and layer-norm outputs before gain/bias.
struct ForwardTrace {
    std::vector<ad::Tensor> attention_weights;
    std::vector<ad::Tensor> ln_normalized;
};

class Classifier {
public:
    virtual ~Classifier() = default;
    // amp, phase: B x W x K tensors; returns B x N unnormalized logits.
    virtual ad::Tensor forward(const ad::Tensor& amp, const ad::Tensor& phase,
                               bool training, Rng& rng, ForwardTrace* trace) = 0;
    ad::Tensor forward(const ad::Tensor& amp, const ad::Tensor& phase, bool training,
                       Rng& rng) {
        return forward(amp, phase, training, rng, nullptr);
    }
    virtual std::vector<ad::Parameter>& parameters() = 0;
    virtual const TransformerConfig& config() const = 0;
    virtual std::string model_type() const = 0;

    std::size_t parameter_count();
    // Copies values into the parameter with the given name (shape-checked).
    void load_parameter(const std::string& name, const std::vector<double>& values);
};

class MultiHeadAttention {
public:
    MultiHeadAttention(const TransformerConfig& cfg, const std::string& prefix,
                       Rng& rng, std::vector<ad::Parameter>& registry);
    ad::Tensor forward(const ad::Tensor& h, ForwardTrace* trace) const;

private:
    const TransformerConfig& cfg_;
    ad::Tensor wq_, wk_, wv_, wo_;
};

class EncoderLayer {
public:
    EncoderLayer(const TransformerConfig& cfg, const std::string& prefix, Rng& rng,
                 std::vector<ad::Parameter>& registry);
    ad::Tensor forward(const ad::Tensor& h, bool training, Rng& rng,
                       ForwardTrace* trace) const;

private:
    const TransformerConfig& cfg_;
    MultiHeadAttention attention_;
    ad::Tensor ln1_gain_, ln1_bias_, ln2_gain_, ln2_bias_;
    ad::Tensor ffn_w1_, ffn_b1_, ffn_w2_, ffn_b2_;
};

// Two independent encoder branches (amplitude, phase) fused by concatenating
// temporal-mean-pooled embeddings ahead of a linear head.
class DualBranchModel final : public Classifier {
public:
    DualBranchModel(const TransformerConfig& cfg, std::uint64_t seed);
    ad::Tensor forward(const ad::Tensor& amp, const ad::Tensor& phase, bool training,
                       Rng& rng, ForwardTrace* trace) override;
    using Classifier::forward;
    std::vector<ad::Parameter>& parameters() override { return params_; }
    const TransformerConfig& config() const override { return cfg_; }
    std::string model_type() const override { return "transformer"; }

private:
    struct Branch {
        ad::Tensor in_w, in_b;
        std::vector<EncoderLayer> layers;
    };
    ad::Tensor branch_forward(const Branch& b, const ad::Tensor& x, bool training,
                              Rng& rng, ForwardTrace* trace) const;

    TransformerConfig cfg_;
    std::vector<ad::Parameter> params_;
    Branch amp_, ph_;
    ad::Tensor head_w_, head_b_;
    ad::Tensor pe_;  // W x d_model, constant
};

// Temporal means of both modalities, concatenated, through one hidden layer.
class MlpBaseline final : public Classifier {
public:
    MlpBaseline(const TransformerConfig& cfg, std::uint64_t seed);
    ad::Tensor forward(const ad::Tensor& amp, const ad::Tensor& phase, bool training,
                       Rng& rng, ForwardTrace* trace) override;
    using Classifier::forward;
    std::vector<ad::Parameter>& parameters() override { return params_; }
    const TransformerConfig& config() const override { return cfg_; }
    std::string model_type() const override { return "mlp"; }

private:
    TransformerConfig cfg_;
    std::vector<ad::Parameter> params_;
    ad::Tensor w1_, b1_, w2_, b2_;
};

// Amplitude and phase as two input channels, three 3x3/32 conv + 2x2 pool
// stages, then the MLP head.
class CnnBaseline final : public Classifier {
public:
    CnnBaseline(const TransformerConfig& cfg, std::uint64_t seed);
    ad::Tensor forward(const ad::Tensor& amp, const ad::Tensor& phase, bool training,
                       Rng& rng, ForwardTrace* trace) override;
    using Classifier::forward;
    std::vector<ad::Parameter>& parameters() override { return params_; }
    const TransformerConfig& config() const override { return cfg_; }
    std::string model_type() const override { return "cnn"; }

    static constexpr std::size_t kFeatureMaps = 32;
    static constexpr std::size_t kConvStages = 3;

private:
    TransformerConfig cfg_;
    std::vector<ad::Parameter> params_;
    std::vector<ad::Tensor> conv_w_, conv_b_;
    ad::Tensor w1_, b1_, w2_, b2_;
    std::size_t flat_dim_ = 0;
};

std::unique_ptr<Classifier> make_model(const std::string& type,
                                       const TransformerConfig& cfg,
                                       std::uint64_t seed);

}  // namespace csiid
