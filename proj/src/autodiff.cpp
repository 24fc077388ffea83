#include "csiid/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_set>

namespace csiid::ad {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                     " and " + shape_str(b));
}

std::shared_ptr<Node> make_node(Shape shape, const char* op) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value.assign(shape_numel(n->shape), 0.0);
    n->op = op;
    return n;
}

// Attaches graph edges when grad mode is on and any parent needs gradients.
Tensor finish(std::shared_ptr<Node> n, std::vector<std::shared_ptr<Node>> parents,
              std::function<void(Node&)> backward_fn) {
    if (g_grad_enabled) {
        bool rg = false;
        for (const auto& p : parents) rg = rg || p->requires_grad;
        if (rg) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backward_fn = std::move(backward_fn);
        }
    }
    return Tensor(std::move(n));
}

std::vector<double>& adj_of(Node& n) {
    if (n.adj.empty()) n.adj.assign(n.value.size(), 0.0);
    return n.adj;
}

// True when b may broadcast against a: single element, or b's shape is a
// trailing suffix of a's.
bool suffix_broadcastable(const Shape& a, const Shape& b) {
    if (shape_numel(b) == 1) return true;
    if (b.size() > a.size()) return false;
    for (std::size_t i = 0; i < b.size(); ++i)
        if (b[b.size() - 1 - i] != a[a.size() - 1 - i]) return false;
    return true;
}

// ---- matmul kernels; all accumulate into C ----

// C(M,N) += A(M,K) * B(K,N)
void mm_nn(const double* A, const double* B, double* C, std::size_t M, std::size_t K,
           std::size_t N) {
    for (std::size_t i = 0; i < M; ++i) {
        const double* a_row = A + i * K;
        double* c_row = C + i * N;
        for (std::size_t k = 0; k < K; ++k) {
            const double a = a_row[k];
            const double* b_row = B + k * N;
            for (std::size_t j = 0; j < N; ++j) c_row[j] += a * b_row[j];
        }
    }
}

// C(M,N) += A(M,K) * B(N,K)^T
void mm_nt(const double* A, const double* B, double* C, std::size_t M, std::size_t K,
           std::size_t N) {
    for (std::size_t i = 0; i < M; ++i) {
        const double* a_row = A + i * K;
        double* c_row = C + i * N;
        for (std::size_t j = 0; j < N; ++j) {
            const double* b_row = B + j * K;
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) s += a_row[k] * b_row[k];
            c_row[j] += s;
        }
    }
}

// C(K,N) += A(M,K)^T * B(M,N)
void mm_tn(const double* A, const double* B, double* C, std::size_t M, std::size_t K,
           std::size_t N) {
    for (std::size_t m = 0; m < M; ++m) {
        const double* a_row = A + m * K;
        const double* b_row = B + m * N;
        for (std::size_t k = 0; k < K; ++k) {
            const double a = a_row[k];
            double* c_row = C + k * N;
            for (std::size_t j = 0; j < N; ++j) c_row[j] += a * b_row[j];
        }
    }
}

}  // namespace

// ---- Tensor ----

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = make_node(std::move(shape), "leaf");
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
    auto n = make_node(std::move(shape), "leaf");
    std::fill(n->value.begin(), n->value.end(), fill);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
    if (shape_numel(shape) != values.size())
        throw ShapeError("from_values: " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
    auto n = make_node(std::move(shape), "leaf");
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_values({1}, {v}, requires_grad);
}

Tensor Tensor::from_mat(const Mat& m, bool requires_grad) {
    return from_values({m.rows(), m.cols()}, m.data(), requires_grad);
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item: tensor is not scalar, shape " +
                                       shape_str(shape()));
    return node_->value[0];
}

std::vector<double>& Tensor::grad() {
    if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Mat Tensor::to_mat() const {
    if (ndim() != 2) throw ShapeError("to_mat: expected rank 2, got " +
                                      shape_str(shape()));
    Mat m(dim(0), dim(1));
    m.data() = node_->value;
    return m;
}

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- elementwise ----

namespace {

enum class BinKind { Add, Sub, Mul };

Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind, const char* name) {
    if (!suffix_broadcastable(a.shape(), b.shape())) shape_fail(name, a.shape(), b.shape());
    auto n = make_node(a.shape(), name);
    const auto& av = a.values();
    const auto& bv = b.values();
    const std::size_t period = bv.size();
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double x = av[i];
        const double y = bv[i % period];
        n->value[i] = kind == BinKind::Add ? x + y : kind == BinKind::Sub ? x - y : x * y;
    }
    return finish(std::move(n), {a.node(), b.node()}, [kind, period](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& da = adj_of(pa);
            if (kind == BinKind::Mul) {
                const auto& bv2 = pb.value;
                for (std::size_t i = 0; i < self.adj.size(); ++i)
                    da[i] += self.adj[i] * bv2[i % period];
            } else {
                for (std::size_t i = 0; i < self.adj.size(); ++i) da[i] += self.adj[i];
            }
        }
        if (pb.requires_grad) {
            auto& db = adj_of(pb);
            if (kind == BinKind::Mul) {
                const auto& av2 = pa.value;
                for (std::size_t i = 0; i < self.adj.size(); ++i)
                    db[i % period] += self.adj[i] * av2[i];
            } else {
                const double sign = kind == BinKind::Sub ? -1.0 : 1.0;
                for (std::size_t i = 0; i < self.adj.size(); ++i)
                    db[i % period] += sign * self.adj[i];
            }
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Mul, "mul"); }

Tensor scale(const Tensor& x, double c) {
    auto n = make_node(x.shape(), "scale");
    const auto& xv = x.values();
    for (std::size_t i = 0; i < xv.size(); ++i) n->value[i] = c * xv[i];
    return finish(std::move(n), {x.node()}, [c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& dx = adj_of(p);
        for (std::size_t i = 0; i < self.adj.size(); ++i) dx[i] += c * self.adj[i];
    });
}

Tensor relu(const Tensor& x) {
    auto n = make_node(x.shape(), "relu");
    const auto& xv = x.values();
    for (std::size_t i = 0; i < xv.size(); ++i) n->value[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    return finish(std::move(n), {x.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& dx = adj_of(p);
        for (std::size_t i = 0; i < self.adj.size(); ++i)
            if (p.value[i] > 0.0) dx[i] += self.adj[i];
    });
}

// ---- matmul ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2) shape_fail("matmul", sa, sb);
    const std::size_t M = sa[sa.size() - 2];
    const std::size_t K = sa[sa.size() - 1];
    const std::size_t Kb = sb[sb.size() - 2];
    const std::size_t N = sb[sb.size() - 1];
    if (K != Kb) shape_fail("matmul", sa, sb);
    const bool b_shared = sb.size() == 2;
    if (!b_shared) {
        if (sb.size() != sa.size()) shape_fail("matmul", sa, sb);
        for (std::size_t i = 0; i + 2 < sa.size(); ++i)
            if (sa[i] != sb[i]) shape_fail("matmul", sa, sb);
    }
    std::size_t batches = 1;
    for (std::size_t i = 0; i + 2 < sa.size(); ++i) batches *= sa[i];

    Shape out_shape(sa.begin(), sa.end() - 2);
    out_shape.push_back(M);
    out_shape.push_back(N);
    auto n = make_node(std::move(out_shape), "matmul");

    const double* ap = a.values().data();
    const double* bp = b.values().data();
    for (std::size_t t = 0; t < batches; ++t)
        mm_nn(ap + t * M * K, b_shared ? bp : bp + t * K * N, n->value.data() + t * M * N,
              M, K, N);

    return finish(std::move(n), {a.node(), b.node()},
                  [M, K, N, batches, b_shared](Node& self) {
                      Node& pa = *self.parents[0];
                      Node& pb = *self.parents[1];
                      const double* dout = self.adj.data();
                      if (pa.requires_grad) {
                          double* da = adj_of(pa).data();
                          const double* bv = pb.value.data();
                          for (std::size_t t = 0; t < batches; ++t)
                              mm_nt(dout + t * M * N, b_shared ? bv : bv + t * K * N,
                                    da + t * M * K, M, N, K);
                      }
                      if (pb.requires_grad) {
                          double* db = adj_of(pb).data();
                          const double* av = pa.value.data();
                          for (std::size_t t = 0; t < batches; ++t)
                              mm_tn(av + t * M * K, dout + t * M * N,
                                    b_shared ? db : db + t * K * N, M, K, N);
                      }
                  });
}

// ---- softmax / layer norm ----

Tensor softmax(const Tensor& x) {
    if (x.ndim() == 0 || x.numel() == 0) shape_fail("softmax", x.shape(), {});
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.numel() / d;
    auto n = make_node(x.shape(), "softmax");
    const double* xp = x.values().data();
    double* yp = n->value.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xp + r * d;
        double* out = yp + r * d;
        double m = row[0];
        for (std::size_t i = 1; i < d; ++i) m = std::max(m, row[i]);
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            out[i] = std::exp(row[i] - m);
            s += out[i];
        }
        for (std::size_t i = 0; i < d; ++i) out[i] /= s;
    }
    return finish(std::move(n), {x.node()}, [d, rows](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& dx = adj_of(p);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.value.data() + r * d;
            const double* g = self.adj.data() + r * d;
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i) dot += g[i] * y[i];
            double* out = dx.data() + r * d;
            for (std::size_t i = 0; i < d; ++i) out[i] += y[i] * (g[i] - dot);
        }
    });
}

Tensor layer_norm_normalize(const Tensor& x, double eps) {
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.numel() / d;
    auto n = make_node(x.shape(), "layer_norm");
    std::vector<double> inv(rows);
    const double* xp = x.values().data();
    double* yp = n->value.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xp + r * d;
        double mu = 0.0;
        for (std::size_t i = 0; i < d; ++i) mu += row[i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
        var /= static_cast<double>(d);
        inv[r] = 1.0 / std::sqrt(var + eps);
        double* out = yp + r * d;
        for (std::size_t i = 0; i < d; ++i) out[i] = (row[i] - mu) * inv[r];
    }
    return finish(std::move(n), {x.node()}, [d, rows, inv = std::move(inv)](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& dx = adj_of(p);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.value.data() + r * d;  // normalized values
            const double* g = self.adj.data() + r * d;
            double mg = 0.0, mgy = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                mg += g[i];
                mgy += g[i] * y[i];
            }
            mg /= static_cast<double>(d);
            mgy /= static_cast<double>(d);
            double* out = dx.data() + r * d;
            for (std::size_t i = 0; i < d; ++i)
                out[i] += inv[r] * (g[i] - mg - y[i] * mgy);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    return add(mul(layer_norm_normalize(x, eps), gain), bias);
}

// ---- dropout ----

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw InputError("dropout rate must be in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.numel());
    for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
    auto n = make_node(x.shape(), "dropout");
    const auto& xv = x.values();
    for (std::size_t i = 0; i < xv.size(); ++i) n->value[i] = xv[i] * mask[i];
    return finish(std::move(n), {x.node()}, [mask = std::move(mask)](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& dx = adj_of(p);
        for (std::size_t i = 0; i < self.adj.size(); ++i) dx[i] += self.adj[i] * mask[i];
    });
}

// ---- reductions / reshaping ----

Tensor mean(const Tensor& x, std::size_t axis) {
    if (axis >= x.ndim()) throw ShapeError("mean: axis " + std::to_string(axis) +
                                           " out of range for " + shape_str(x.shape()));
    const Shape& s = x.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[axis];

    Shape out_shape;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (i != axis) out_shape.push_back(s[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    auto n = make_node(std::move(out_shape), "mean");

    const double* xp = x.values().data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < len; ++j) {
            const double* src = xp + (o * len + j) * inner;
            double* dst = n->value.data() + o * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    const double scale_by = 1.0 / static_cast<double>(len);
    for (double& v : n->value) v *= scale_by;

    return finish(std::move(n), {x.node()}, [outer, inner, len, scale_by](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& dx = adj_of(p);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < len; ++j) {
                double* dst = dx.data() + (o * len + j) * inner;
                const double* src = self.adj.data() + o * inner;
                for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * scale_by;
            }
    });
}

Tensor sum(const Tensor& x) {
    auto n = make_node({1}, "sum");
    double s = 0.0;
    for (double v : x.values()) s += v;
    n->value[0] = s;
    return finish(std::move(n), {x.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& dx = adj_of(p);
        const double g = self.adj[0];
        for (double& v : dx) v += g;
    });
}

Tensor concat(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != sb.size() || sa.empty()) shape_fail("concat", sa, sb);
    for (std::size_t i = 0; i + 1 < sa.size(); ++i)
        if (sa[i] != sb[i]) shape_fail("concat", sa, sb);
    const std::size_t la = sa.back();
    const std::size_t lb = sb.back();
    const std::size_t rows = a.numel() / la;

    Shape out_shape = sa;
    out_shape.back() = la + lb;
    auto n = make_node(std::move(out_shape), "concat");
    for (std::size_t r = 0; r < rows; ++r) {
        double* dst = n->value.data() + r * (la + lb);
        const double* pa = a.values().data() + r * la;
        const double* pb = b.values().data() + r * lb;
        std::copy(pa, pa + la, dst);
        std::copy(pb, pb + lb, dst + la);
    }
    return finish(std::move(n), {a.node(), b.node()}, [la, lb, rows](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (std::size_t r = 0; r < rows; ++r) {
            const double* g = self.adj.data() + r * (la + lb);
            if (pa.requires_grad) {
                double* da = adj_of(pa).data() + r * la;
                for (std::size_t i = 0; i < la; ++i) da[i] += g[i];
            }
            if (pb.requires_grad) {
                double* db = adj_of(pb).data() + r * lb;
                for (std::size_t i = 0; i < lb; ++i) db[i] += g[la + i];
            }
        }
    });
}

Tensor transpose(const Tensor& x) {
    if (x.ndim() < 2) throw ShapeError("transpose: need rank >= 2, got " +
                                       shape_str(x.shape()));
    return swap_axes(x, x.ndim() - 2, x.ndim() - 1);
}

Tensor swap_axes(const Tensor& x, std::size_t i, std::size_t j) {
    const Shape& s = x.shape();
    if (i >= s.size() || j >= s.size())
        throw ShapeError("swap_axes: axes out of range for " + shape_str(s));
    if (i == j) return x;

    Shape out_shape = s;
    std::swap(out_shape[i], out_shape[j]);

    // Row-major strides for input and output.
    const std::size_t nd = s.size();
    std::vector<std::size_t> in_stride(nd, 1), out_stride(nd, 1);
    for (std::size_t a = nd - 1; a-- > 0;) in_stride[a] = in_stride[a + 1] * s[a + 1];
    for (std::size_t a = nd - 1; a-- > 0;)
        out_stride[a] = out_stride[a + 1] * out_shape[a + 1];
    // Mapping: output coordinate c corresponds to input coordinate with axes
    // i and j swapped, so the input offset uses permuted strides.
    std::vector<std::size_t> perm_stride(nd);
    for (std::size_t a = 0; a < nd; ++a) perm_stride[a] = in_stride[a];
    std::swap(perm_stride[i], perm_stride[j]);

    auto n = make_node(out_shape, "swap_axes");
    const std::size_t total = x.numel();
    const double* xp = x.values().data();
    std::vector<std::size_t> coord(nd, 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat, in_off = 0;
        for (std::size_t a = 0; a < nd; ++a) {
            const std::size_t c = rem / out_stride[a];
            rem %= out_stride[a];
            in_off += c * perm_stride[a];
        }
        n->value[flat] = xp[in_off];
    }
    return finish(std::move(n), {x.node()},
                  [out_stride, perm_stride, nd, total](Node& self) {
                      Node& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      auto& dx = adj_of(p);
                      for (std::size_t flat = 0; flat < total; ++flat) {
                          std::size_t rem = flat, in_off = 0;
                          for (std::size_t a = 0; a < nd; ++a) {
                              const std::size_t c = rem / out_stride[a];
                              rem %= out_stride[a];
                              in_off += c * perm_stride[a];
                          }
                          dx[in_off] += self.adj[flat];
                      }
                  });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        shape_fail("reshape", x.shape(), shape);
    auto n = make_node(std::move(shape), "reshape");
    n->value = x.values();
    return finish(std::move(n), {x.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& dx = adj_of(p);
        for (std::size_t i = 0; i < self.adj.size(); ++i) dx[i] += self.adj[i];
    });
}

// ---- convolution / pooling ----

namespace {

struct ConvDims {
    std::size_t B, C, H, W, OC, KH, KW, pad, HO, WO;
};

// cols is (C*KH*KW) x (HO*WO) for one batch item.
void im2col(const double* x, const ConvDims& d, double* cols) {
    const std::size_t hw = d.HO * d.WO;
    for (std::size_t c = 0; c < d.C; ++c)
        for (std::size_t ky = 0; ky < d.KH; ++ky)
            for (std::size_t kx = 0; kx < d.KW; ++kx) {
                double* row = cols + ((c * d.KH + ky) * d.KW + kx) * hw;
                for (std::size_t oy = 0; oy < d.HO; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) -
                                              static_cast<std::ptrdiff_t>(d.pad);
                    for (std::size_t ox = 0; ox < d.WO; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) -
                                                  static_cast<std::ptrdiff_t>(d.pad);
                        double v = 0.0;
                        if (iy >= 0 && iy < static_cast<std::ptrdiff_t>(d.H) && ix >= 0 &&
                            ix < static_cast<std::ptrdiff_t>(d.W))
                            v = x[(c * d.H + static_cast<std::size_t>(iy)) * d.W +
                                  static_cast<std::size_t>(ix)];
                        row[oy * d.WO + ox] = v;
                    }
                }
            }
}

void col2im_accumulate(const double* cols, const ConvDims& d, double* dx) {
    const std::size_t hw = d.HO * d.WO;
    for (std::size_t c = 0; c < d.C; ++c)
        for (std::size_t ky = 0; ky < d.KH; ++ky)
            for (std::size_t kx = 0; kx < d.KW; ++kx) {
                const double* row = cols + ((c * d.KH + ky) * d.KW + kx) * hw;
                for (std::size_t oy = 0; oy < d.HO; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) -
                                              static_cast<std::ptrdiff_t>(d.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.H)) continue;
                    for (std::size_t ox = 0; ox < d.WO; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) -
                                                  static_cast<std::ptrdiff_t>(d.pad);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.W)) continue;
                        dx[(c * d.H + static_cast<std::size_t>(iy)) * d.W +
                           static_cast<std::size_t>(ix)] += row[oy * d.WO + ox];
                    }
                }
            }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t pad) {
    if (x.ndim() != 4 || w.ndim() != 4) shape_fail("conv2d", x.shape(), w.shape());
    ConvDims d;
    d.B = x.dim(0);
    d.C = x.dim(1);
    d.H = x.dim(2);
    d.W = x.dim(3);
    d.OC = w.dim(0);
    d.KH = w.dim(2);
    d.KW = w.dim(3);
    d.pad = pad;
    if (w.dim(1) != d.C) shape_fail("conv2d", x.shape(), w.shape());
    if (bias.numel() != d.OC) shape_fail("conv2d bias", bias.shape(), w.shape());
    if (d.H + 2 * pad < d.KH || d.W + 2 * pad < d.KW)
        throw ShapeError("conv2d: input " + shape_str(x.shape()) +
                         " too small for kernel " + shape_str(w.shape()));
    d.HO = d.H + 2 * pad - d.KH + 1;
    d.WO = d.W + 2 * pad - d.KW + 1;

    const std::size_t ck = d.C * d.KH * d.KW;
    const std::size_t hw = d.HO * d.WO;
    auto n = make_node({d.B, d.OC, d.HO, d.WO}, "conv2d");
    std::vector<double> cols(ck * hw);
    for (std::size_t b = 0; b < d.B; ++b) {
        im2col(x.values().data() + b * d.C * d.H * d.W, d, cols.data());
        double* out = n->value.data() + b * d.OC * hw;
        mm_nn(w.values().data(), cols.data(), out, d.OC, ck, hw);
        for (std::size_t oc = 0; oc < d.OC; ++oc) {
            const double bv = bias.values()[oc];
            for (std::size_t i = 0; i < hw; ++i) out[oc * hw + i] += bv;
        }
    }
    return finish(std::move(n), {x.node(), w.node(), bias.node()}, [d, ck, hw](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        std::vector<double> cols(ck * hw);
        std::vector<double> dcols;
        for (std::size_t b = 0; b < d.B; ++b) {
            const double* dout = self.adj.data() + b * d.OC * hw;
            if (pb.requires_grad) {
                auto& db = adj_of(pb);
                for (std::size_t oc = 0; oc < d.OC; ++oc) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < hw; ++i) s += dout[oc * hw + i];
                    db[oc] += s;
                }
            }
            if (pw.requires_grad) {
                im2col(px.value.data() + b * d.C * d.H * d.W, d, cols.data());
                mm_nt(dout, cols.data(), adj_of(pw).data(), d.OC, hw, ck);
            }
            if (px.requires_grad) {
                dcols.assign(ck * hw, 0.0);
                mm_tn(pw.value.data(), dout, dcols.data(), d.OC, ck, hw);
                col2im_accumulate(dcols.data(), d,
                                  adj_of(px).data() + b * d.C * d.H * d.W);
            }
        }
    });
}

Tensor maxpool2x2(const Tensor& x) {
    if (x.ndim() != 4) throw ShapeError("maxpool2x2: need rank 4, got " +
                                        shape_str(x.shape()));
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t HO = H / 2, WO = W / 2;
    if (HO == 0 || WO == 0)
        throw ShapeError("maxpool2x2: input " + shape_str(x.shape()) + " too small");
    auto n = make_node({B, C, HO, WO}, "maxpool2x2");
    std::vector<std::uint32_t> argmax(B * C * HO * WO);
    const double* xp = x.values().data();
    std::size_t o = 0;
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const double* plane = xp + bc * H * W;
        for (std::size_t oy = 0; oy < HO; ++oy)
            for (std::size_t ox = 0; ox < WO; ++ox, ++o) {
                std::size_t best = (2 * oy) * W + 2 * ox;
                double bv = plane[best];
                const std::size_t cand[3] = {(2 * oy) * W + 2 * ox + 1,
                                             (2 * oy + 1) * W + 2 * ox,
                                             (2 * oy + 1) * W + 2 * ox + 1};
                for (std::size_t idx : cand)
                    if (plane[idx] > bv) {
                        bv = plane[idx];
                        best = idx;
                    }
                n->value[o] = bv;
                argmax[o] = static_cast<std::uint32_t>(bc * H * W + best);
            }
    }
    return finish(std::move(n), {x.node()}, [argmax = std::move(argmax)](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& dx = adj_of(p);
        for (std::size_t i = 0; i < self.adj.size(); ++i) dx[argmax[i]] += self.adj[i];
    });
}

Tensor stack_pair(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape() || a.ndim() != 3)
        shape_fail("stack_pair", a.shape(), b.shape());
    const std::size_t B = a.dim(0), plane = a.dim(1) * a.dim(2);
    auto n = make_node({B, 2, a.dim(1), a.dim(2)}, "stack_pair");
    for (std::size_t t = 0; t < B; ++t) {
        std::copy(a.values().begin() + t * plane, a.values().begin() + (t + 1) * plane,
                  n->value.begin() + t * 2 * plane);
        std::copy(b.values().begin() + t * plane, b.values().begin() + (t + 1) * plane,
                  n->value.begin() + t * 2 * plane + plane);
    }
    return finish(std::move(n), {a.node(), b.node()}, [B, plane](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (std::size_t t = 0; t < B; ++t) {
            const double* g = self.adj.data() + t * 2 * plane;
            if (pa.requires_grad) {
                double* da = adj_of(pa).data() + t * plane;
                for (std::size_t i = 0; i < plane; ++i) da[i] += g[i];
            }
            if (pb.requires_grad) {
                double* db = adj_of(pb).data() + t * plane;
                for (std::size_t i = 0; i < plane; ++i) db[i] += g[plane + i];
            }
        }
    });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 2) throw ShapeError("cross_entropy: logits must be rank 2, got " +
                                             shape_str(logits.shape()));
    const std::size_t B = logits.dim(0), N = logits.dim(1);
    if (labels.size() != B)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(B));
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= N)
            throw InputError("cross_entropy: label " + std::to_string(l) +
                             " out of range [0, " + std::to_string(N) + ")");

    auto n = make_node({1}, "cross_entropy");
    const double* xp = logits.values().data();
    double total = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
        const double* row = xp + r * N;
        double m = row[0];
        for (std::size_t i = 1; i < N; ++i) m = std::max(m, row[i]);
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i) s += std::exp(row[i] - m);
        const double lse = m + std::log(s);
        total += lse - row[static_cast<std::size_t>(labels[r])];
    }
    n->value[0] = total / static_cast<double>(B);

    return finish(std::move(n), {logits.node()}, [B, N, labels](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& dx = adj_of(p);
        const double g = self.adj[0] / static_cast<double>(B);
        for (std::size_t r = 0; r < B; ++r) {
            const double* row = p.value.data() + r * N;
            double m = row[0];
            for (std::size_t i = 1; i < N; ++i) m = std::max(m, row[i]);
            double s = 0.0;
            for (std::size_t i = 0; i < N; ++i) s += std::exp(row[i] - m);
            double* out = dx.data() + r * N;
            for (std::size_t i = 0; i < N; ++i) {
                const double prob = std::exp(row[i] - m) / s;
                const double onehot =
                    static_cast<std::size_t>(labels[r]) == i ? 1.0 : 0.0;
                out[i] += g * (prob - onehot);
            }
        }
    });
}

// ---- backward ----

void backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw ShapeError("backward: loss must be scalar, shape " +
                         shape_str(loss.shape()));
    Node* root = loss.node().get();

    // Iterative post-order DFS for a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* parent = node->parents[idx].get();
            ++idx;
            if (visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // order is post-order: parents before consumers; walk it backwards.
    adj_of(*root);
    root->adj[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (!node->requires_grad || node->adj.empty()) continue;
        if (node->backward_fn) node->backward_fn(*node);
    }
    for (Node* node : order) {
        if (node->requires_grad && !node->adj.empty()) {
            if (node->grad.empty()) node->grad.assign(node->value.size(), 0.0);
            for (std::size_t i = 0; i < node->adj.size(); ++i)
                node->grad[i] += node->adj[i];
        }
        node->adj.clear();
        node->adj.shrink_to_fit();
    }
}

void zero_grads(std::vector<Parameter>& params) {
    for (auto& p : params) p.tensor.zero_grad();
}

bool GradCheckReport::passed(double tolerance) const {
    return forward_deterministic && max_rel_err <= tolerance;
}

GradCheckReport grad_check(const std::function<Tensor()>& forward,
                           std::vector<Parameter>& params, double step) {
    GradCheckReport report;

    // A stochastic forward (e.g. dropout left enabled) invalidates the check.
    const std::vector<double> probe1 = forward().values();
    const std::vector<double> probe2 = forward().values();
    if (probe1 != probe2) {
        report.forward_deterministic = false;
        report.max_rel_err = std::numeric_limits<double>::infinity();
        return report;
    }

    zero_grads(params);
    backward(forward());
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.push_back(p.tensor.grad());

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& values = params[pi].tensor.values();
        GradCheckEntry entry;
        entry.name = params[pi].name;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double orig = values[i];
            values[i] = orig + step;
            const double lp = forward().item();
            values[i] = orig - step;
            const double lm = forward().item();
            values[i] = orig;
            const double numeric = (lp - lm) / (2.0 * step);
            const double a = analytic[pi][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
            entry.max_rel_err = std::max(entry.max_rel_err, std::abs(a - numeric) / denom);
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace csiid::ad
