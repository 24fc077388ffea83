// Minimal dense-tensor engine with reverse-mode differentiation. Tensors are
// handles onto shared graph nodes; ops record a backward closure. A graph is
// single-owner during forward/backward; tensors without graph links are
// immutable and shareable across threads.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "csiid/common.hpp"
#include "csiid/rng.hpp"

namespace csiid::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // persistent, accumulated across backward calls
    std::vector<double> adj;   // per-backward-pass adjoint workspace
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // propagates adj into parents' adj
    const char* op = "leaf";
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double fill, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::vector<double> values,
                              bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor from_mat(const Mat& m, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->value.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape[i]; }

    std::vector<double>& values() { return node_->value; }
    const std::vector<double>& values() const { return node_->value; }
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    // Accumulated gradient; allocated (zero) on first access.
    std::vector<double>& grad();
    void zero_grad();

    Mat to_mat() const;  // 2-D tensors only

    std::shared_ptr<Node> node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// While a guard is alive, ops do not record the backward graph.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool saved_;
};
bool grad_enabled();

// ---- primitive ops ----
// Elementwise ops broadcast the second operand when its shape is a trailing
// suffix of the first's (bias over leading dims) or a single element.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor relu(const Tensor& x);

// Batched matrix product over the last two axes. The right operand is either
// rank-2 (shared across batches) or carries identical leading dims.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& x);  // last axis, max-subtracted for stability
// (x - mean) / sqrt(var + eps) over the last axis, before gain/bias.
Tensor layer_norm_normalize(const Tensor& x, double eps);
// Full layer norm with learnable gain and bias (both shaped like the last axis).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// Train mode: inverted-scaling Bernoulli mask; eval mode: identity.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

Tensor mean(const Tensor& x, std::size_t axis);  // removes the axis
Tensor sum(const Tensor& x);                     // scalar
Tensor concat(const Tensor& a, const Tensor& b);  // last axis
Tensor transpose(const Tensor& x);                // last two axes
Tensor swap_axes(const Tensor& x, std::size_t i, std::size_t j);
Tensor reshape(const Tensor& x, Shape shape);

// x: B x C x H x W, w: OC x C x KH x KW, bias: OC; stride 1, zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t pad);
Tensor maxpool2x2(const Tensor& x);  // floor semantics on odd extents

// Stacks two B x H x W tensors into B x 2 x H x W.
Tensor stack_pair(const Tensor& a, const Tensor& b);

// Mean over the batch of -log softmax(logits)[label], in log-sum-exp form.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// ---- backward ----
// Propagates d(loss)/d(node) through the graph and accumulates into each
// requires-grad node's persistent grad. Repeated calls accumulate.
void backward(const Tensor& loss);

struct Parameter {
    std::string name;
    Tensor tensor;
};

void zero_grads(std::vector<Parameter>& params);

// ---- gradient verification ----
struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    bool forward_deterministic = true;  // false invalidates the check
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    bool passed(double tolerance) const;
};

// Central finite differences over every element of every parameter. The
// forward closure must be deterministic (dropout disabled); this is verified
// by double evaluation. Relative error uses max(|analytic|, |numeric|, 1e-3)
// as denominator so that near-zero gradients compare absolutely.
GradCheckReport grad_check(const std::function<Tensor()>& forward,
                           std::vector<Parameter>& params, double step = 1e-5);

}  // namespace csiid::ad
