#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every differentiable operation in execution order. Var is a
// lightweight handle (tape, node index) to a recorded value. backward() walks
// the nodes in exact reverse insertion order, so gradient accumulation order
// is fixed by the order in which the forward pass ran.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "drnet/tensor.hpp"

namespace drnet {

template <typename T>
class Tape;

template <typename T>
class Var {
 public:
  Var() = default;

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Receives gradients flowing out of one node during backward().
template <typename T>
class GradSink {
 public:
  bool wants(const Var<T>& v) const { return v.requires_grad(); }
  /// Zero-initialised gradient buffer for `v`, allocated on first use.
  Tensor<T>& slot(const Var<T>& v);
  void accumulate(const Var<T>& v, const Tensor<T>& g);

 private:
  friend class Tape<T>;
  explicit GradSink(std::vector<Tensor<T>>& grads) : grads_(grads) {}
  std::vector<Tensor<T>>& grads_;
};

template <typename T>
class Gradients {
 public:
  const Tensor<T>& of(const Var<T>& v) const;
  const Tensor<T>& operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return named_.count(name) != 0; }
  const std::map<std::string, Tensor<T>>& named() const { return named_; }

 private:
  friend class Tape<T>;
  std::vector<Tensor<T>> by_node_;
  std::map<std::string, Tensor<T>> named_;
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor<T>& grad_out, const Tensor<T>& out, GradSink<T>& sink)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  /// Unnamed leaf that receives a gradient.
  Var<T> variable(Tensor<T> value);
  /// Named leaf that receives a gradient; reported by name from backward().
  Var<T> parameter(std::string name, Tensor<T> value);
  /// Records a non-leaf node. Callers only record when some input requires a gradient.
  Var<T> record(Tensor<T> value, BackwardFn fn);

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Non-smooth ops (relu, max-pool, clamps) fold their branch decisions into
  /// a signature while tracking is on; gradient checking compares signatures
  /// to detect perturbations that cross a kink.
  void set_branch_tracking(bool on) { track_branches_ = on; }
  bool tracking_branches() const { return track_branches_; }
  void note_branch(std::uint64_t bits);
  std::uint64_t branch_signature() const { return branch_signature_; }

  /// Gradient of a single-element `loss` w.r.t. every requires-grad node.
  /// Leaves not on any path to the loss get zero gradients.
  Gradients<T> backward(const Var<T>& loss);

 private:
  struct Node {
    Tensor<T> value;
    bool requires_grad = false;
    std::string name;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  bool track_branches_ = false;
  std::uint64_t branch_signature_ = 0;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

// Element-wise arithmetic. Shapes must match exactly.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> add_scalar(const Var<T>& a, T s);
template <typename T> Var<T> mul_scalar(const Var<T>& a, T s);
template <typename T> Var<T> square(const Var<T>& a);

template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }

// The two documented broadcasts: a per-feature bias over batch rows of a
// [N, F] tensor, and a per-channel bias over a [N, C, ...] tensor.
template <typename T> Var<T> add_row_bias(const Var<T>& x, const Var<T>& bias);
template <typename T> Var<T> add_channel_bias(const Var<T>& x, const Var<T>& bias);

/// Rank-2 matrix product.
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);

template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
/// [N, ...] -> [N, rest]
template <typename T> Var<T> flatten(const Var<T>& a);

template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> leaky_relu(const Var<T>& a, T slope);
template <typename T> Var<T> tanh(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);
/// Softmax over axis 1 of a rank-2 tensor.
template <typename T> Var<T> softmax(const Var<T>& a);

/// Copy of the value with no gradient path back to `a`.
template <typename T> Var<T> detach(const Var<T>& a) { return a.tape().constant(a.value()); }

}  // namespace drnet
