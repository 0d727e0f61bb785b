#include "gfoes/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gfoes/error.hpp"

namespace gfoes {

const char* op_name(OpKind op) noexcept {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::Relu: return "relu";
    case OpKind::Tanh: return "tanh";
    case OpKind::SoftmaxRows: return "softmax_rows";
    case OpKind::Reciprocal: return "reciprocal";
    case OpKind::ClampMin: return "clamp_min";
    case OpKind::Sum: return "sum";
    case OpKind::SumOverRows: return "sum_over_rows";
    case OpKind::SumOverCols: return "sum_over_cols";
    case OpKind::RepeatRows: return "repeat_rows";
    case OpKind::RepeatCols: return "repeat_cols";
    case OpKind::ExpandScalar: return "expand_scalar";
    case OpKind::ConcatRows: return "concat_rows";
    case OpKind::SliceRows: return "slice_rows";
    case OpKind::PadRows: return "pad_rows";
    case OpKind::CrossEntropy: return "cross_entropy";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!tape_) throw ShapeError("use of an unbound Var");
  return tape_->node(id_).value;
}

Var Tape::constant(Tensor value) {
  require_matrix(value, "constant");
  require_finite(value, "constant");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::variable(Tensor value) {
  Var v = constant(std::move(value));
  nodes_.back().requires_grad = true;
  return v;
}

Var Tape::parameter(std::string name, Tensor value) {
  Var v = variable(std::move(value));
  nodes_.back().name = std::move(name);
  parameter_ids_.push_back(v.id());
  return v;
}

std::vector<Var> Tape::bind(const ParameterVector& params) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(parameter(p.name, p.value));
  return vars;
}

Var Tape::push(OpKind op, Tensor value, std::initializer_list<Var> parents, double scalar,
               std::size_t offset, std::size_t extent,
               std::shared_ptr<const std::vector<int>> labels) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite result in ") + op_name(op));
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.scalar = scalar;
  n.offset = offset;
  n.extent = extent;
  n.labels = std::move(labels);
  if (recording_) {
    for (const Var& p : parents) {
      if (&p.tape() != this) throw ShapeError("operands belong to different tapes");
      n.parents[n.arity++] = p.id();
      n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
    }
  }
  if (!n.requires_grad) {
    // Nothing upstream needs a gradient: store as a constant.
    n.op = OpKind::Leaf;
    n.arity = 0;
    n.labels.reset();
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

namespace {

Tape& common_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ShapeError("operands belong to different tapes");
  return a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    std::ostringstream os;
    os << what << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
       << b.cols();
    throw ShapeError(os.str());
  }
}

template <class F>
Tensor map_values(const Tensor& a, F f) {
  Tensor out = a;
  for (double& v : out.values()) v = f(v);
  return out;
}

template <class F>
Tensor zip_values(const Tensor& a, const Tensor& b, F f) {
  Tensor out = a;
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = f(ov[i], bv[i]);
  return out;
}

Tensor softmax_values(const Tensor& logits) {
  Tensor out = logits;
  const std::size_t n = logits.cols();
  auto ov = out.values();
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    double* row = ov.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= z;
  }
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  return t.push(OpKind::MatMul, linalg::matmul(a.value(), b.value()), {a, b});
}

Var transpose(Var a) { return a.tape().push(OpKind::Transpose, linalg::transpose(a.value()), {a}); }

Var operator+(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  return t.push(OpKind::Add, zip_values(a.value(), b.value(), std::plus<>()), {a, b});
}

Var operator-(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  return t.push(OpKind::Sub, zip_values(a.value(), b.value(), std::minus<>()), {a, b});
}

Var operator*(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  return t.push(OpKind::Mul, zip_values(a.value(), b.value(), std::multiplies<>()), {a, b});
}

Var operator-(Var a) { return scale(a, -1.0); }

Var scale(Var a, double factor) {
  return a.tape().push(OpKind::Scale, map_values(a.value(), [&](double v) { return v * factor; }),
                       {a}, factor);
}

Var add_scalar(Var a, double c) {
  return a.tape().push(OpKind::AddScalar, map_values(a.value(), [&](double v) { return v + c; }),
                       {a}, c);
}

Var relu(Var a) { return a.tape().push(OpKind::Relu, linalg::relu(a.value()), {a}); }

Var tanh(Var a) {
  return a.tape().push(OpKind::Tanh, map_values(a.value(), [](double v) { return std::tanh(v); }),
                       {a});
}

Var softmax_rows(Var a) {
  return a.tape().push(OpKind::SoftmaxRows, softmax_values(a.value()), {a});
}

Var reciprocal(Var a) {
  return a.tape().push(OpKind::Reciprocal,
                       map_values(a.value(), [](double v) { return 1.0 / v; }), {a});
}

Var clamp_min(Var a, double floor) {
  return a.tape().push(OpKind::ClampMin,
                       map_values(a.value(), [&](double v) { return std::max(v, floor); }), {a},
                       floor);
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape().push(OpKind::Sum, Tensor::scalar(s), {a});
}

Var sum_over_rows(Var a) {
  const Tensor& x = a.value();
  Tensor out = Tensor::zeros(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += x(r, c);
  return a.tape().push(OpKind::SumOverRows, std::move(out), {a});
}

Var sum_over_cols(Var a) {
  const Tensor& x = a.value();
  Tensor out = Tensor::zeros(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, 0) += x(r, c);
  return a.tape().push(OpKind::SumOverCols, std::move(out), {a});
}

Var repeat_rows(Var row, std::size_t rows) {
  const Tensor& x = row.value();
  if (x.rows() != 1) throw ShapeError("repeat_rows: expected a 1xN row");
  Tensor out = Tensor::zeros(rows, x.cols());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(0, c);
  return row.tape().push(OpKind::RepeatRows, std::move(out), {row});
}

Var repeat_cols(Var col, std::size_t cols) {
  const Tensor& x = col.value();
  if (x.cols() != 1) throw ShapeError("repeat_cols: expected an Mx1 column");
  Tensor out = Tensor::zeros(x.rows(), cols);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = x(r, 0);
  return col.tape().push(OpKind::RepeatCols, std::move(out), {col});
}

Var expand_scalar(Var s, std::size_t rows, std::size_t cols) {
  return s.tape().push(OpKind::ExpandScalar, Tensor::filled(rows, cols, s.value().item()), {s});
}

Var concat_rows(Var top, Var bottom) {
  Tape& t = common_tape(top, bottom);
  const Tensor& a = top.value();
  const Tensor& b = bottom.value();
  if (a.cols() != b.cols()) throw ShapeError("concat_rows: column count mismatch");
  std::vector<double> values(a.values().begin(), a.values().end());
  values.insert(values.end(), b.values().begin(), b.values().end());
  return t.push(OpKind::ConcatRows, Tensor({a.rows() + b.rows(), a.cols()}, std::move(values)),
                {top, bottom}, 0.0, a.rows());
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  if (count == 0 || begin + count > x.rows()) throw ShapeError("slice_rows: range out of bounds");
  const auto first = x.values().begin() + static_cast<std::ptrdiff_t>(begin * x.cols());
  std::vector<double> values(first, first + static_cast<std::ptrdiff_t>(count * x.cols()));
  return a.tape().push(OpKind::SliceRows, Tensor({count, x.cols()}, std::move(values)), {a}, 0.0,
                       begin, x.rows());
}

Var pad_rows(Var a, std::size_t begin, std::size_t total_rows) {
  const Tensor& x = a.value();
  if (begin + x.rows() > total_rows) throw ShapeError("pad_rows: range out of bounds");
  Tensor out = Tensor::zeros(total_rows, x.cols());
  std::copy(x.values().begin(), x.values().end(),
            out.values().begin() + static_cast<std::ptrdiff_t>(begin * x.cols()));
  return a.tape().push(OpKind::PadRows, std::move(out), {a}, 0.0, begin, total_rows);
}

Var affine(Var x, Var weight, Var bias) {
  Var xw = matmul(x, weight);
  return xw + repeat_rows(bias, xw.rows());
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  return cross_entropy(logits, std::make_shared<const std::vector<int>>(labels.begin(), labels.end()));
}

Var cross_entropy(Var logits, std::shared_ptr<const std::vector<int>> labels) {
  const Tensor& z = logits.value();
  const std::size_t batch = z.rows();
  const std::size_t classes = z.cols();
  if (batch == 0 || labels->empty()) throw EmptyInputError("cross_entropy: empty batch");
  if (labels->size() != batch) throw ShapeError("cross_entropy: label count differs from batch");
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const int y = (*labels)[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw InvalidLabelError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
    auto row = z.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double zsum = 0.0;
    for (double v : row) zsum += std::exp(v - mx);
    total += mx + std::log(zsum) - row[static_cast<std::size_t>(y)];
  }
  // Rounding can leave -0 or a tiny negative on a perfectly confident row.
  const double loss = std::max(0.0, total / static_cast<double>(batch));
  return logits.tape().push(OpKind::CrossEntropy, Tensor::scalar(loss), {logits}, 0.0, 0, 0,
                            std::move(labels));
}

namespace {

Tensor one_hot(const std::vector<int>& labels, std::size_t classes) {
  Tensor out = Tensor::zeros(labels.size(), classes);
  for (std::size_t r = 0; r < labels.size(); ++r) out(r, static_cast<std::size_t>(labels[r])) = 1.0;
  return out;
}

void accumulate(std::vector<Var>& adjoint, std::uint32_t id, Var contribution) {
  Var& slot = adjoint[id];
  slot = slot.valid() ? slot + contribution : contribution;
}

// Pushes the adjoint `g` of node `id` onto those parents that need it. All
// rules are written with tape ops so that they can be differentiated again.
void propagate(Tape& tape, std::uint32_t id, Var g, std::vector<Var>& adjoint) {
  const Node& node = tape.node(id);
  const std::uint32_t p0 = node.parents[0];
  const std::uint32_t p1 = node.parents[1];
  auto wants = [&](std::uint32_t pid) { return tape.node(pid).requires_grad; };
  auto send = [&](std::uint32_t pid, auto&& make) {
    if (wants(pid)) accumulate(adjoint, pid, make());
  };
  Var self = tape.var(id);
  Var a = tape.var(p0);

  switch (node.op) {
    case OpKind::Leaf:
      break;
    case OpKind::MatMul: {
      Var b = tape.var(p1);
      send(p0, [&] { return matmul(g, transpose(b)); });
      send(p1, [&] { return matmul(transpose(a), g); });
      break;
    }
    case OpKind::Transpose:
      send(p0, [&] { return transpose(g); });
      break;
    case OpKind::Add:
      send(p0, [&] { return g; });
      send(p1, [&] { return g; });
      break;
    case OpKind::Sub:
      send(p0, [&] { return g; });
      send(p1, [&] { return -g; });
      break;
    case OpKind::Mul: {
      Var b = tape.var(p1);
      send(p0, [&] { return g * b; });
      send(p1, [&] { return g * a; });
      break;
    }
    case OpKind::Scale:
      send(p0, [&] { return scale(g, node.scalar); });
      break;
    case OpKind::AddScalar:
      send(p0, [&] { return g; });
      break;
    case OpKind::Relu:
      send(p0, [&] {
        Tensor mask = a.value();
        for (double& v : mask.values()) v = v > 0.0 ? 1.0 : 0.0;
        return g * tape.constant(std::move(mask));
      });
      break;
    case OpKind::Tanh:
      // d tanh = 1 - y^2
      send(p0, [&] { return g * add_scalar(-(self * self), 1.0); });
      break;
    case OpKind::SoftmaxRows:
      // dx = y * (g - rowsum(g * y))
      send(p0, [&] {
        Var dot = sum_over_cols(g * self);
        return self * (g - repeat_cols(dot, self.cols()));
      });
      break;
    case OpKind::Reciprocal:
      send(p0, [&] { return -(g * self * self); });
      break;
    case OpKind::ClampMin:
      send(p0, [&] {
        Tensor mask = a.value();
        for (double& v : mask.values()) v = v >= node.scalar ? 1.0 : 0.0;
        return g * tape.constant(std::move(mask));
      });
      break;
    case OpKind::Sum:
      send(p0, [&] { return expand_scalar(g, a.rows(), a.cols()); });
      break;
    case OpKind::SumOverRows:
      send(p0, [&] { return repeat_rows(g, a.rows()); });
      break;
    case OpKind::SumOverCols:
      send(p0, [&] { return repeat_cols(g, a.cols()); });
      break;
    case OpKind::RepeatRows:
      send(p0, [&] { return sum_over_rows(g); });
      break;
    case OpKind::RepeatCols:
      send(p0, [&] { return sum_over_cols(g); });
      break;
    case OpKind::ExpandScalar:
      send(p0, [&] { return sum(g); });
      break;
    case OpKind::ConcatRows: {
      const std::size_t top = node.offset;
      const std::size_t bottom = node.value.rows() - top;
      send(p0, [&] { return slice_rows(g, 0, top); });
      send(p1, [&] { return slice_rows(g, top, bottom); });
      break;
    }
    case OpKind::SliceRows:
      send(p0, [&] { return pad_rows(g, node.offset, node.extent); });
      break;
    case OpKind::PadRows:
      send(p0, [&] { return slice_rows(g, node.offset, a.rows()); });
      break;
    case OpKind::CrossEntropy:
      // d/dz mean_i CE_i = (softmax(z) - onehot) / batch
      send(p0, [&] {
        const std::size_t batch = a.rows();
        Var residual = softmax_rows(a) - tape.constant(one_hot(*node.labels, a.cols()));
        return residual * expand_scalar(scale(g, 1.0 / static_cast<double>(batch)), batch, a.cols());
      });
      break;
  }
}

}  // namespace

std::vector<Var> grad(Var loss, std::span<const Var> wrt, bool create_graph) {
  Tape& tape = loss.tape();
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + std::to_string(loss.rows()) + "x" +
                     std::to_string(loss.cols()));
  }
  for (const Var& w : wrt) {
    if (&w.tape() != &tape) throw ShapeError("backward: differentiation target on another tape");
  }

  const std::uint32_t top = loss.id();
  std::vector<Var> adjoint(static_cast<std::size_t>(top) + 1);
  RecordingScope scope(tape, create_graph);
  adjoint[top] = tape.constant(Tensor::scalar(1.0));

  // Node ids are a topological order, so a single reverse sweep visits every
  // node after all of its consumers.
  for (std::uint32_t id = top + 1; id-- > 0;) {
    const Node& node = tape.node(id);
    if (!adjoint[id].valid() || !node.requires_grad || node.op == OpKind::Leaf) continue;
    propagate(tape, id, adjoint[id], adjoint);
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.id() <= top && adjoint[w.id()].valid()) {
      result.push_back(adjoint[w.id()]);
    } else {
      result.push_back(tape.constant(Tensor::zeros(w.rows(), w.cols())));
    }
  }
  return result;
}

GradientMap backward(Var loss) {
  Tape& tape = loss.tape();
  std::vector<Var> params;
  for (std::uint32_t id : tape.parameter_ids()) params.push_back(tape.var(id));
  std::vector<Var> grads = grad(loss, params, false);
  GradientMap out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.add(tape.node(params[i].id()).name, grads[i].value());
  }
  return out;
}

}  // namespace gfoes
