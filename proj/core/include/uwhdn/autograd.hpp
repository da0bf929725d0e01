#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "uwhdn/tensor.hpp"

namespace uwhdn {

// Reverse-mode autodiff over rank-4 tensors. A Graph owns the nodes of one
// forward computation; creation order is a topological order, so backward()
// is a reverse sweep. Graphs are cheap and rebuilt per step; a single graph
// may be extended and differentiated several times (the GAN alternation
// builds discriminator losses, steps, then builds generator losses on the
// same generator subgraph).
//
// Parameters are persistent leaves. Graph::use() snapshots the parameter's
// current value into a fresh leaf node, so stepping an optimizer between two
// uses of the same Parameter never lets stale values leak into later nodes.
// Gradients accumulate into Parameter::grad across all uses.

class Graph;

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad = Tensor(value.shape()); }
};

namespace detail {
struct Node {
  Tensor value;
  Tensor grad;  // empty until backward touches this node
  bool requires_grad = false;
  std::vector<Node*> parents;
  std::function<void(Node&)> backward;  // null for leaves
};
}  // namespace detail

class Value {
 public:
  Value() = default;
  bool valid() const { return node_ != nullptr; }
  const Tensor& tensor() const { return node_->value; }
  const Shape4& shape() const { return node_->value.shape(); }
  Scalar item() const { return node_->value.item(); }

 private:
  friend class Graph;
  friend struct OpAccess;
  Value(detail::Node* n, Graph* g) : node_(n), graph_(g) {}
  detail::Node* node_ = nullptr;
  Graph* graph_ = nullptr;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf without gradient.
  Value input(Tensor t);
  // Leaf snapshotting a parameter; gradients accumulate into p.grad on backward().
  Value use(Parameter& p);

  // Differentiate a scalar value. Node gradients from any earlier backward on
  // this graph are cleared first; Parameter::grad is accumulated, not reset.
  void backward(const Value& loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend struct OpAccess;
  detail::Node* make(Tensor value, std::vector<detail::Node*> parents,
                     std::function<void(detail::Node&)> bw);
  std::vector<std::unique_ptr<detail::Node>> nodes_;
  std::vector<std::pair<Parameter*, detail::Node*>> param_uses_;
};

// ---- Operations -----------------------------------------------------------

// 2-d convolution, NCHW. w: [out_c, in_c, kh, kw]; optional bias [1, out_c, 1, 1].
Value conv2d(Value x, Value w, Value b, std::size_t stride, std::size_t pad);
// Transposed convolution. w: [in_c, out_c, kh, kw]; h_out = (h-1)*stride - 2*pad + kh.
Value conv_transpose2d(Value x, Value w, Value b, std::size_t stride, std::size_t pad);

Value leaky_relu(Value x, Scalar negative_slope);
Value tanh_act(Value x);
Value sigmoid(Value x);
// a * x + b, elementwise with scalar constants.
Value affine(Value x, Scalar a, Scalar b);
Value add(Value x, Value y);
Value concat_channels(Value x, Value y);
Value resize_nearest(Value x, std::size_t out_h, std::size_t out_w);

// Reductions to 1x1x1x1 scalars.
Value mean_abs(Value x);
Value mean_abs_diff(Value x, Value y);
Value mean_square_diff(Value x, Scalar target);
// mean(softplus(sign * x)); sign must be +1 or -1. Stable for large |x|.
Value mean_softplus(Value x, Scalar sign);
Value weighted_sum(const std::vector<std::pair<Scalar, Value>>& terms);

// Cuts the graph: same value, no gradient flow.
Value detach(Value x);

}  // namespace uwhdn
