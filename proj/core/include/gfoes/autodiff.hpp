#pragma once

// Reverse-mode automatic differentiation over rank-2 tensors.
//
// A Tape records every operation as a node in creation order, so node ids are
// already a topological order. Vector-Jacobian products are themselves
// expressed as tape operations; with create_graph the adjoints stay connected
// to the forward graph and can be differentiated again (used to push
// gradients through an unrolled SGD step).

#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gfoes/error.hpp"
#include "gfoes/params.hpp"
#include "gfoes/tensor.hpp"

namespace gfoes {

class Tape;

enum class OpKind : std::uint8_t {
  Leaf,
  MatMul,
  Transpose,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  Relu,
  Tanh,
  SoftmaxRows,
  Reciprocal,
  ClampMin,
  Sum,
  SumOverRows,
  SumOverCols,
  RepeatRows,
  RepeatCols,
  ExpandScalar,
  ConcatRows,
  SliceRows,
  PadRows,
  CrossEntropy,
};

const char* op_name(OpKind op) noexcept;

/// Handle to a node of a Tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  const Tensor& value() const;
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const noexcept { return id_; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

struct Node {
  OpKind op = OpKind::Leaf;
  std::uint8_t arity = 0;
  bool requires_grad = false;
  std::uint32_t parents[2] = {0, 0};
  Tensor value;
  double scalar = 0.0;
  std::size_t offset = 0;
  std::size_t extent = 0;
  std::shared_ptr<const std::vector<int>> labels;
  std::string name;  // parameter leaves only
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that gradients can be taken with respect to.
  Var variable(Tensor value);
  /// Named variable leaf; backward() reports gradients for every parameter.
  Var parameter(std::string name, Tensor value);
  /// Registers each tensor of `params` as a parameter leaf, in order.
  std::vector<Var> bind(const ParameterVector& params);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::uint32_t id) const { return nodes_.at(id); }
  Var var(std::uint32_t id) {
    if (id >= nodes_.size()) throw ShapeError("node id out of range");
    return Var(this, id);
  }
  std::span<const std::uint32_t> parameter_ids() const noexcept { return parameter_ids_; }

  bool recording() const noexcept { return recording_; }

  // Used by the op constructors.
  Var push(OpKind op, Tensor value, std::initializer_list<Var> parents, double scalar = 0.0,
           std::size_t offset = 0, std::size_t extent = 0,
           std::shared_ptr<const std::vector<int>> labels = nullptr);

 private:
  friend class RecordingScope;

  std::deque<Node> nodes_;
  std::vector<std::uint32_t> parameter_ids_;
  bool recording_ = true;
};

/// Toggles whether new nodes remember their parents. While off, every new
/// node is a constant, which is how first-order backward avoids growing a
/// differentiable graph.
class RecordingScope {
 public:
  RecordingScope(Tape& tape, bool record) : tape_(tape), previous_(tape.recording_) {
    tape_.recording_ = record;
  }
  ~RecordingScope() { tape_.recording_ = previous_; }
  RecordingScope(const RecordingScope&) = delete;
  RecordingScope& operator=(const RecordingScope&) = delete;

 private:
  Tape& tape_;
  bool previous_;
};

Var matmul(Var a, Var b);
Var transpose(Var a);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
/// Elementwise product of equal shapes.
Var operator*(Var a, Var b);
Var operator-(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double c);
Var relu(Var a);
Var tanh(Var a);
Var softmax_rows(Var a);
Var reciprocal(Var a);
/// max(a, floor) elementwise; the gradient is zero where the floor is active.
Var clamp_min(Var a, double floor);
/// Sum of all entries, as 1x1.
Var sum(Var a);
/// m x n -> 1 x n.
Var sum_over_rows(Var a);
/// m x n -> m x 1.
Var sum_over_cols(Var a);
/// 1 x n -> rows x n.
Var repeat_rows(Var row, std::size_t rows);
/// m x 1 -> m x cols.
Var repeat_cols(Var col, std::size_t cols);
/// 1x1 -> rows x cols.
Var expand_scalar(Var s, std::size_t rows, std::size_t cols);
Var concat_rows(Var top, Var bottom);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
/// Places `a` at row `begin` of a zero matrix with `total_rows` rows.
Var pad_rows(Var a, std::size_t begin, std::size_t total_rows);
/// x W + b with b (1 x n) broadcast over rows.
Var affine(Var x, Var weight, Var bias);
/// Mean over the batch of -log softmax(logits)[label].
Var cross_entropy(Var logits, std::span<const int> labels);
Var cross_entropy(Var logits, std::shared_ptr<const std::vector<int>> labels);

/// Gradients of scalar `loss` with respect to each of `wrt`, in order.
/// Inputs unreachable from `loss` receive zeros. With create_graph the
/// returned Vars are differentiable functions of the forward graph.
std::vector<Var> grad(Var loss, std::span<const Var> wrt, bool create_graph = false);

/// Gradient values for every parameter leaf registered on the loss's tape.
GradientMap backward(Var loss);

}  // namespace gfoes
