#include "hqmamba/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "hqmamba/errors.hpp"
#include "hqmamba/kernels.hpp"

namespace hqmamba::ad {

namespace {

thread_local bool t_grad_enabled = true;

void ensure_grad(Node& n) {
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
}

// Builds an op result. When no input requires grad (or recording is off) the
// result is a constant and the graph edge is dropped.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<NodePtr> inputs,
                   std::string op, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = std::move(op);
  const bool needs = t_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& p) {
                       return p && p->requires_grad;
                     });
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

// Returns the grad buffer of input i, or an empty span if it takes no gradient.
std::span<double> input_grad(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return {};
  ensure_grad(in);
  return in.grad;
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw UsageError(std::string(op) + ": undefined tensor");
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// Second-operand broadcast: b's shape must equal a's shape or a's trailing dims.
std::size_t broadcast_period(const char* op, const Shape& a, const Shape& b) {
  if (b.size() > a.size() || !std::equal(b.rbegin(), b.rend(), a.rbegin())) shape_error(op, a, b);
  return numel(b);
}

std::size_t last_dim(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw DimensionError(std::string(op) + ": tensor must have rank >= 1");
  return x.shape().back();
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* name, Fwd f, Deriv df) {
  require_defined(a, name);
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return make_result(a.shape(), std::move(out), {a.ptr()}, name, [df](Node& self) {
    auto g = input_grad(self, 0);
    const auto& x = self.inputs[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(x[i], self.value[i]);
  });
}

}  // namespace

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = ad::numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (ad::numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({}, {v}, requires_grad); }

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }
bool grad_enabled() { return t_grad_enabled; }

std::vector<Node*> topological_order(const Tensor& root) {
  std::vector<Node*> order;
  if (!root.defined()) return order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS: (node, next input index).
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

void backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  const auto order = topological_order(loss);
  for (Node* n : order)
    if (n->requires_grad) ensure_grad(*n);
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backward) n->backward(*n);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (b.rank() != 2 || a.rank() == 0 || a.shape().back() != b.dim(0)) shape_error("matmul", a.shape(), b.shape());
  const std::size_t k = b.dim(0), n = b.dim(1), m = a.numel() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<double> out(m * n);
  kernels::matmul(a.data(), b.data(), out, m, k, n, false);
  return make_result(std::move(out_shape), std::move(out), {a.ptr(), b.ptr()}, "matmul",
                     [m, k, n](Node& self) {
                       if (auto ga = input_grad(self, 0); !ga.empty())
                         kernels::matmul_grad_a(self.grad, self.inputs[1]->value, ga, m, k, n);
                       if (auto gb = input_grad(self, 1); !gb.empty())
                         kernels::matmul_grad_b(self.inputs[0]->value, self.grad, gb, m, k, n);
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  const std::size_t nb = broadcast_period("add", a.shape(), b.shape());
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % nb];
  return make_result(a.shape(), std::move(out), {a.ptr(), b.ptr()}, "add", [nb](Node& self) {
    if (auto ga = input_grad(self, 0); !ga.empty())
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    if (auto gb = input_grad(self, 1); !gb.empty())
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % nb] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  const std::size_t nb = broadcast_period("mul", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i % nb];
  return make_result(a.shape(), std::move(out), {a.ptr(), b.ptr()}, "mul", [nb](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto ga = input_grad(self, 0); !ga.empty())
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * bv[i % nb];
    if (auto gb = input_grad(self, 1); !gb.empty())
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % nb] += self.grad[i] * av[i];
  });
}

Tensor scale(const Tensor& a, double c) {
  return unary(a, "scale", [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor exp(const Tensor& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor silu(const Tensor& a) {
  return unary(
      a, "silu", [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, "softplus", [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor conv1d_causal(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_defined(x, "conv1d_causal");
  require_defined(weight, "conv1d_causal");
  if (x.rank() != 3 || weight.rank() != 2 || weight.dim(0) != x.dim(2)) {
    shape_error("conv1d_causal", x.shape(), weight.shape());
  }
  if (bias.defined() && bias.shape() != Shape{x.dim(2)}) shape_error("conv1d_causal", x.shape(), bias.shape());
  const std::size_t B = x.dim(0), L = x.dim(1), C = x.dim(2), K = weight.dim(1);
  std::vector<double> out(x.numel(), 0.0);
  const auto xv = x.data();
  const auto wv = weight.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t c = 0; c < C; ++c) {
        double acc = bias.defined() ? bias.data()[c] : 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          if (t + k + 1 < K) continue;
          acc += wv[c * K + k] * xv[(b * L + t + k + 1 - K) * C + c];
        }
        out[(b * L + t) * C + c] = acc;
      }
  std::vector<NodePtr> inputs{x.ptr(), weight.ptr()};
  if (bias.defined()) inputs.push_back(bias.ptr());
  return make_result(x.shape(), std::move(out), std::move(inputs), "conv1d_causal",
                     [B, L, C, K](Node& self) {
                       const auto& xv = self.inputs[0]->value;
                       const auto& wv = self.inputs[1]->value;
                       auto gx = input_grad(self, 0);
                       auto gw = input_grad(self, 1);
                       std::span<double> gbias;
                       if (self.inputs.size() > 2) gbias = input_grad(self, 2);
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t t = 0; t < L; ++t)
                           for (std::size_t c = 0; c < C; ++c) {
                             const double g = self.grad[(b * L + t) * C + c];
                             if (!gbias.empty()) gbias[c] += g;
                             for (std::size_t k = 0; k < K; ++k) {
                               if (t + k + 1 < K) continue;
                               const std::size_t xi = (b * L + t + k + 1 - K) * C + c;
                               if (!gx.empty()) gx[xi] += wv[c * K + k] * g;
                               if (!gw.empty()) gw[c * K + k] += xv[xi] * g;
                             }
                           }
                     });
}

Tensor rmsnorm(const Tensor& x, const Tensor& weight, double eps) {
  require_defined(x, "rmsnorm");
  require_defined(weight, "rmsnorm");
  const std::size_t D = last_dim(x, "rmsnorm");
  if (weight.shape() != Shape{D}) shape_error("rmsnorm", x.shape(), weight.shape());
  const std::size_t rows = x.numel() / D;
  std::vector<double> out(x.numel());
  std::vector<double> inv_rms(rows);
  const auto xv = x.data();
  const auto wv = weight.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double ms = 0.0;
    for (std::size_t i = 0; i < D; ++i) ms += xv[r * D + i] * xv[r * D + i];
    inv_rms[r] = 1.0 / std::sqrt(ms / static_cast<double>(D) + eps);
    for (std::size_t i = 0; i < D; ++i) out[r * D + i] = xv[r * D + i] * inv_rms[r] * wv[i];
  }
  return make_result(x.shape(), std::move(out), {x.ptr(), weight.ptr()}, "rmsnorm",
                     [D, rows, inv_rms = std::move(inv_rms)](Node& self) {
                       const auto& xv = self.inputs[0]->value;
                       const auto& wv = self.inputs[1]->value;
                       auto gx = input_grad(self, 0);
                       auto gw = input_grad(self, 1);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* x = xv.data() + r * D;
                         const double* g = self.grad.data() + r * D;
                         const double ir = inv_rms[r];
                         if (!gw.empty())
                           for (std::size_t i = 0; i < D; ++i) gw[i] += g[i] * x[i] * ir;
                         if (gx.empty()) continue;
                         double dot = 0.0;
                         for (std::size_t i = 0; i < D; ++i) dot += g[i] * wv[i] * x[i];
                         const double c = ir * ir * ir * dot / static_cast<double>(D);
                         for (std::size_t i = 0; i < D; ++i) gx[r * D + i] += ir * wv[i] * g[i] - x[i] * c;
                       }
                     });
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> indices, const Shape& index_shape) {
  require_defined(table, "embedding_lookup");
  if (table.rank() != 2) throw DimensionError("embedding_lookup: table must be [V, D], got " + shape_str(table.shape()));
  if (numel(index_shape) != indices.size()) {
    throw DimensionError("embedding_lookup: " + std::to_string(indices.size()) +
                         " indices for index shape " + shape_str(index_shape));
  }
  const std::size_t V = table.dim(0), D = table.dim(1);
  std::vector<double> out(indices.size() * D);
  const auto tv = table.data();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0 || static_cast<std::size_t>(indices[r]) >= V) {
      throw DimensionError("embedding_lookup: index " + std::to_string(indices[r]) + " outside [0, " +
                           std::to_string(V) + ")");
    }
    std::copy_n(tv.begin() + indices[r] * D, D, out.begin() + r * D);
  }
  Shape out_shape = index_shape;
  out_shape.push_back(D);
  return make_result(std::move(out_shape), std::move(out), {table.ptr()}, "embedding_lookup",
                     [D, idx = std::vector<int>(indices.begin(), indices.end())](Node& self) {
                       auto gt = input_grad(self, 0);
                       for (std::size_t r = 0; r < idx.size(); ++r)
                         for (std::size_t i = 0; i < D; ++i) gt[idx[r] * D + i] += self.grad[r * D + i];
                     });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_defined(logits, "softmax_cross_entropy");
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("softmax_cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  std::vector<double> probs(B * C);
  double loss = 0.0;
  const auto z = logits.data();
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= C) {
      throw DimensionError("softmax_cross_entropy: label " + std::to_string(labels[b]) + " outside [0, " +
                           std::to_string(C) + ")");
    }
    const double mx = *std::max_element(z.begin() + b * C, z.begin() + (b + 1) * C);
    double se = 0.0;
    for (std::size_t c = 0; c < C; ++c) se += std::exp(z[b * C + c] - mx);
    for (std::size_t c = 0; c < C; ++c) probs[b * C + c] = std::exp(z[b * C + c] - mx) / se;
    loss += (mx + std::log(se)) - z[b * C + labels[b]];
  }
  loss /= static_cast<double>(B);
  return make_result({}, {loss}, {logits.ptr()}, "softmax_cross_entropy",
                     [B, C, probs = std::move(probs),
                      lab = std::vector<int>(labels.begin(), labels.end())](Node& self) {
                       auto g = input_grad(self, 0);
                       const double s = self.grad[0] / static_cast<double>(B);
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t c = 0; c < C; ++c)
                           g[b * C + c] += s * (probs[b * C + c] - (static_cast<int>(c) == lab[b] ? 1.0 : 0.0));
                     });
}

Tensor slice_last(const Tensor& x, std::size_t start, std::size_t len) {
  require_defined(x, "slice_last");
  const std::size_t D = last_dim(x, "slice_last");
  if (start + len > D || len == 0) {
    throw DimensionError("slice_last: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") outside last axis of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / D;
  std::vector<double> out(rows * len);
  const auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.begin() + r * D + start, len, out.begin() + r * len);
  Shape s = x.shape();
  s.back() = len;
  return make_result(std::move(s), std::move(out), {x.ptr()}, "slice_last", [D, rows, start, len](Node& self) {
    auto g = input_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < len; ++i) g[r * D + start + i] += self.grad[r * len + i];
  });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat_last: no inputs");
  Shape lead = parts[0].shape();
  last_dim(parts[0], "concat_last");
  lead.pop_back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  std::vector<NodePtr> inputs;
  for (const auto& p : parts) {
    require_defined(p, "concat_last");
    Shape l = p.shape();
    const std::size_t w = last_dim(p, "concat_last");
    l.pop_back();
    if (l != lead) shape_error("concat_last", parts[0].shape(), p.shape());
    widths.push_back(w);
    total += w;
    inputs.push_back(p.ptr());
  }
  const std::size_t rows = numel(lead);
  std::vector<double> out(rows * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.begin() + r * widths[k], widths[k], out.begin() + r * total + off);
    off += widths[k];
  }
  Shape s = lead;
  s.push_back(total);
  return make_result(std::move(s), std::move(out), std::move(inputs), "concat_last",
                     [rows, total, widths](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         auto g = input_grad(self, k);
                         if (!g.empty())
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t i = 0; i < widths[k]; ++i)
                               g[r * widths[k] + i] += self.grad[r * total + off + i];
                         off += widths[k];
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (numel(shape) != x.numel()) shape_error("reshape", x.shape(), shape);
  return make_result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), {x.ptr()},
                     "reshape", [](Node& self) {
                       auto g = input_grad(self, 0);
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                     });
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({}, {s}, {x.ptr()}, "sum", [](Node& self) {
    auto g = input_grad(self, 0);
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  require_defined(x, "mean_axis");
  if (axis >= x.rank()) throw DimensionError("mean_axis: axis " + std::to_string(axis) + " for shape " + shape_str(x.shape()));
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t A = s[axis];
  std::vector<double> out(outer * inner, 0.0);
  const auto xv = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * A + a) * inner + i];
  for (auto& v : out) v /= static_cast<double>(A);
  Shape os = s;
  os.erase(os.begin() + static_cast<std::ptrdiff_t>(axis));
  return make_result(std::move(os), std::move(out), {x.ptr()}, "mean_axis", [outer, A, inner](Node& self) {
    auto g = input_grad(self, 0);
    const double inv = 1.0 / static_cast<double>(A);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t a = 0; a < A; ++a)
        for (std::size_t i = 0; i < inner; ++i) g[(o * A + a) * inner + i] += self.grad[o * inner + i] * inv;
  });
}

CustomOp::CustomOp(std::string name, CustomForward forward, CustomBackward backward)
    : name_(std::move(name)), forward_(std::move(forward)), backward_(std::move(backward)) {
  if (!forward_ || !backward_) throw UsageError("custom_op '" + name_ + "' needs forward and backward functions");
}

Tensor CustomOp::operator()(std::vector<Tensor> inputs) const {
  std::vector<NodePtr> ptrs;
  for (const auto& t : inputs) {
    require_defined(t, name_.c_str());
    ptrs.push_back(t.ptr());
  }
  Value v = forward_(inputs);
  if (numel(v.shape) != v.data.size()) {
    throw DimensionError("custom_op '" + name_ + "': output shape " + shape_str(v.shape) + " holds " +
                         std::to_string(v.data.size()) + " values");
  }
  return make_result(std::move(v.shape), std::move(v.data), std::move(ptrs), name_,
                     [bwd = backward_, name = name_](Node& self) {
                       std::vector<Tensor> ins;
                       ins.reserve(self.inputs.size());
                       for (const auto& p : self.inputs) ins.emplace_back(p);
                       const Value out{self.shape, self.value};
                       auto grads = bwd(ins, out, self.grad);
                       if (grads.size() != ins.size()) {
                         throw UsageError("custom_op '" + name + "': backward returned " +
                                          std::to_string(grads.size()) + " gradients for " +
                                          std::to_string(ins.size()) + " inputs");
                       }
                       for (std::size_t i = 0; i < grads.size(); ++i) {
                         if (grads[i].empty()) continue;
                         if (grads[i].size() != ins[i].numel()) {
                           throw DimensionError("custom_op '" + name + "': gradient " + std::to_string(i) +
                                                " has " + std::to_string(grads[i].size()) + " values for input " +
                                                shape_str(ins[i].shape()));
                         }
                         auto g = input_grad(self, i);
                         for (std::size_t k = 0; k < g.size(); ++k) g[k] += grads[i][k];
                       }
                     });
}

CustomOp custom_op(CustomForward forward, CustomBackward backward, std::string name) {
  return CustomOp(std::move(name), std::move(forward), std::move(backward));
}

}  // namespace hqmamba::ad
