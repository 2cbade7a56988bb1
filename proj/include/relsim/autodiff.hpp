#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
//
// A Tape records every operation applied to its tensors. Tensors are cheap
// handles (tape pointer + node id); values and gradients live on the tape.
// Trainable weights live outside the tape in Parameter objects and are bound
// to a tape per forward pass with Tape::param().

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "relsim/error.hpp"

namespace relsim::ad {

// Rank-1 ([n]) or rank-2 ([rows x cols]) shape.
class Shape {
 public:
  Shape() = default;
  explicit Shape(std::size_t n) : dims_{n, 1}, rank_(1) {}
  Shape(std::size_t rows, std::size_t cols) : dims_{rows, cols}, rank_(2) {}

  std::size_t rank() const { return rank_; }
  std::size_t dim(std::size_t axis) const { return dims_[axis]; }
  // For rank 1 these treat the vector as a single row.
  std::size_t rows() const { return rank_ == 1 ? 1 : dims_[0]; }
  std::size_t cols() const { return rank_ == 1 ? dims_[0] : dims_[1]; }
  std::size_t size() const { return rank_ == 1 ? dims_[0] : dims_[0] * dims_[1]; }

  bool operator==(const Shape& o) const {
    return rank_ == o.rank_ && dims_[0] == o.dims_[0] && (rank_ == 1 || dims_[1] == o.dims_[1]);
  }

  std::string to_string() const;

 private:
  std::array<std::size_t, 2> dims_{0, 1};
  std::size_t rank_ = 0;
};

using ParamId = std::uint64_t;

// A named trainable array owned by a model. Ids are unique per process and
// survive copies, so a copied model refers to the same logical parameters.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Shape shape);
  Parameter(std::string name, Shape shape, std::vector<double> values);

  std::string name;
  Shape shape;
  std::vector<double> value;
  ParamId id = 0;
};

// Gradient map from parameter id to a gradient array with the parameter's
// layout. Missing entries mean "zero gradient".
class Gradients {
 public:
  // Empty span when the parameter received no gradient.
  std::span<const double> get(ParamId id) const;
  bool contains(ParamId id) const { return grads_.count(id) != 0; }
  std::size_t size() const { return grads_.size(); }

  std::vector<double>& slot(ParamId id, std::size_t n);

  const std::unordered_map<ParamId, std::vector<double>>& entries() const { return grads_; }

 private:
  std::unordered_map<ParamId, std::vector<double>> grads_;
};

class Tape;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Shape& shape() const;
  std::span<const double> values() const;
  bool requires_grad() const;
  // Value of a single-element tensor.
  double item() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Shape shape, std::vector<double> values);
  Tensor constant(std::initializer_list<double> values);
  // A free leaf that receives a gradient but is not tied to a Parameter.
  Tensor variable(Shape shape, std::vector<double> values);
  // Binds a parameter as a leaf. Binding the same parameter twice returns
  // the same node. The parameter must outlive the tape and must not be
  // modified while the tape is in use.
  Tensor param(const Parameter& p, bool trainable = true);

  // Runs the backward pass from a single-element loss. Returns gradients of
  // every trainable parameter reachable from the loss.
  Gradients backward(Tensor loss);

  // Gradient of any node after backward(); empty if none flowed into it.
  std::span<const double> grad(Tensor t) const;

  std::size_t size() const { return nodes_.size(); }

  // Used by operations.
  Tensor record(Shape shape, std::vector<double> value, bool requires_grad, BackwardFn backward);
  const Shape& shape_of(std::uint32_t id) const { return nodes_[id].shape; }
  std::span<const double> value_of(std::uint32_t id) const;
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  std::span<const double> grad_of(std::uint32_t id) const { return grads_[id]; }
  // Gradient accumulator of a node, allocated as zeros on first use.
  std::span<double> grad_slot(std::uint32_t id);

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    const Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  std::unordered_map<ParamId, std::uint32_t> bound_;
};

// Elementwise and linear algebra.
Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul_elementwise(Tensor a, Tensor b);
Tensor scale(Tensor a, double c);
Tensor abs_elementwise(Tensor a);
// [m x k] * [k x n] -> [m x n]; a rank-1 [k] left operand gives a rank-1 [n].
Tensor matmul(Tensor a, Tensor b);
// Rank-1 inputs join along axis 0. Rank-2 inputs join rows (axis 0) or
// columns (axis 1).
Tensor concat(std::span<const Tensor> parts, std::size_t axis = 0);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis = 0);
// Stacks equal-length vectors into a [T x d] matrix.
Tensor stack(std::span<const Tensor> rows);
// Row `index` of a [n x d] matrix, as a [d] vector.
Tensor row(Tensor table, std::size_t index);

// Reductions, all returning a single-element tensor.
Tensor mean(Tensor a);
Tensor sum(Tensor a);

// Activations.
Tensor sigmoid(Tensor a);
Tensor tanh_act(Tensor a);
// Per vector, or per row of a matrix.
Tensor log_softmax(Tensor a);
// Columnwise maximum of a [T x d] matrix. Gradient flows to the first
// maximal row of each column.
Tensor max_over_time(Tensor h);

// Applies p <- p - lr * grad(p). Parameters without a gradient entry, and
// entries whose gradient is exactly zero, are left untouched.
void sgd_step(std::span<Parameter* const> params, const Gradients& grads, double lr);

namespace testing {
// Scales the sigmoid backward rule by (1 + factor). Zero in normal use;
// nonzero only to prove the gradient checks catch a broken rule.
void set_backward_perturbation(double factor);
double backward_perturbation();
}  // namespace testing

}  // namespace relsim::ad
