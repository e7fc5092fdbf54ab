#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "streamcast/common.hpp"

// Reverse-mode autodiff over dense 64-bit tensors. Values are immutable once
// created (the optimizer mutates leaf parameters explicitly); every forward op
// verifies finiteness and keeps a fixed reduction order, so results are
// bitwise deterministic for identical inputs regardless of thread count.

namespace streamcast {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

class GradBuffers;
using BackwardFn = std::function<void(const std::vector<double>&, GradBuffers&)>;

struct Node {
  std::uint64_t id = 0;
  Shape shape;
  std::vector<double> value;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward;  // empty for leaves and grad-free nodes
  const char* op = "leaf";
};

}  // namespace detail

class Tensor;

// Gradients returned by backward(): tensor id -> gradient values.
class GradientMap {
 public:
  // Gradient of `t`, zeros if no path from the loss reached it.
  Tensor grad(const Tensor& t) const;
  bool contains(const Tensor& t) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend GradientMap backward(const Tensor&);
  friend class GradAccumulator;
  std::unordered_map<std::uint64_t, std::vector<double>> grads_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);
  // Leaf with requires_grad set: a trainable parameter.
  static Tensor param(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.at(1); }
  const std::vector<double>& data() const { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  std::uint64_t id() const { return node_->id; }

  double value() const;              // scalar tensors only
  double at(std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  // In-place access for optimizer updates; leaves only.
  std::vector<double>& leaf_data();

  const detail::NodePtr& node() const { return node_; }
  explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}

 private:
  detail::NodePtr node_;
};

// Exact reverse-mode gradients of a scalar loss. Does not modify any tensor.
GradientMap backward(const Tensor& loss);

// Sums gradient maps across e.g. a batch, in the order accumulate() is called.
class GradAccumulator {
 public:
  void accumulate(const GradientMap& g);
  void scale(double s);
  Tensor grad(const Tensor& t) const;
  const GradientMap& map() const { return total_; }

 private:
  GradientMap total_;
};

// RAII guard disabling graph construction (inference paths).
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

namespace ops {

// Elementwise binary ops support equal shapes, a scalar rhs, or an rhs whose
// shape is a suffix of the lhs shape (broadcast over leading dims).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor concat(const std::vector<Tensor>& ts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t count);
Tensor reshape(const Tensor& a, Shape shape);

Tensor sum(const Tensor& a);               // all elements -> scalar
Tensor row_sum(const Tensor& a);           // [r x c] -> [r]
Tensor mean(const Tensor& a);

// Cut the graph: same values, no gradient flow.
Tensor detach(const Tensor& a);

// Training-only mask (inverted dropout); identity when !training or rate==0.
Tensor dropout(const Tensor& a, double rate, Rng& rng, bool training);

// softmax(q k^T * scl) v composed from the ops above. Empty k/v rows yield a
// zero contribution (guarded, not attended).
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, double scl);

}  // namespace ops

}  // namespace streamcast
