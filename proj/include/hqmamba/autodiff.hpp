#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

// Reverse-mode automatic differentiation over dense row-major double tensors.
//
// Every op result holds shared pointers to its inputs, so a loss tensor keeps
// its whole graph alive; dropping it frees the graph. Leaves created with
// requires_grad accumulate gradients across backward() calls until zero_grad().
namespace hqmamba::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily by backward()
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<NodePtr> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  /// Empty until a backward pass reaches this tensor.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  void zero_grad();

  double item() const;
  Node* node() const { return node_.get(); }
  const NodePtr& ptr() const { return node_; }

 private:
  NodePtr node_;
};

/// While alive, new ops on this thread record no graph (outputs are constants).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_enabled();

/// Nodes reachable from root, inputs before consumers.
std::vector<Node*> topological_order(const Tensor& root);

/// Seeds d(loss)/d(loss) = 1 and propagates through the graph in reverse
/// topological order. Throws UsageError unless loss has exactly one element.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Primitives. Broadcasting is limited to a second operand whose shape equals
// the trailing dimensions of the first (e.g. a bias of shape [n] against
// [..., n]); everything else must match exactly.

/// a[..., k] x b[k, n] -> [..., n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

Tensor exp(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor softplus(const Tensor& a);

/// Depthwise causal convolution: x [B, L, C], weight [C, K], bias [C] or
/// undefined. y[b,t,c] = bias[c] + sum_k weight[c,k] * x[b, t-K+1+k, c], with
/// x zero for negative time.
Tensor conv1d_causal(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// x / sqrt(mean(x^2 over last axis) + eps) * weight, weight of shape [D].
Tensor rmsnorm(const Tensor& x, const Tensor& weight, double eps = 1e-5);

/// table [V, D] gathered at indices (shape index_shape) -> index_shape + [D].
Tensor embedding_lookup(const Tensor& table, std::span<const int> indices, const Shape& index_shape);

/// Mean cross-entropy of logits [B, C] against integer labels.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Slice [start, start+len) along the last axis.
Tensor slice_last(const Tensor& x, std::size_t start, std::size_t len);
/// Concatenation along the last axis; leading dims must match.
Tensor concat_last(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
/// Mean over one axis, which is removed from the shape.
Tensor mean_axis(const Tensor& x, std::size_t axis);

// ---------------------------------------------------------------------------
// Custom operations.

struct Value {
  Shape shape;
  std::vector<double> data;
};

/// Produces the output from the input tensors.
using CustomForward = std::function<Value(std::span<const Tensor> inputs)>;
/// Given inputs, the forward output and d(loss)/d(output), returns one
/// gradient vector per input (each sized like that input; an empty vector
/// means "no gradient").
using CustomBackward = std::function<std::vector<std::vector<double>>(
    std::span<const Tensor> inputs, const Value& output, std::span<const double> grad_output)>;

/// A user-defined op that takes part in backward() like a primitive.
class CustomOp {
 public:
  CustomOp(std::string name, CustomForward forward, CustomBackward backward);
  Tensor operator()(std::vector<Tensor> inputs) const;

 private:
  std::string name_;
  CustomForward forward_;
  CustomBackward backward_;
};

CustomOp custom_op(CustomForward forward, CustomBackward backward, std::string name = "custom");

}  // namespace hqmamba::ad
