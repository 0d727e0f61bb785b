#include "gfoes/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "gfoes/error.hpp"

namespace gfoes {

namespace {

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  const std::size_t n =
      std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  if (std::any_of(shape_.begin(), shape_.end(), [](std::size_t d) { return d == 0; }) &&
      !values_.empty()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " has a zero dimension");
  }
  if (n != values_.size() && !(n == 0 && values_.empty())) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                     std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) { return filled(rows, cols, 0.0); }

Tensor Tensor::filled(std::size_t rows, std::size_t cols, double value) {
  Tensor t;
  t.shape_ = {rows, cols};
  t.values_.assign(rows * cols, value);
  return t;
}

Tensor Tensor::scalar(double value) { return filled(1, 1, value); }

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows in Tensor::from_rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

std::size_t Tensor::rows() const noexcept {
  if (shape_.size() < 2) return shape_.empty() ? (values_.empty() ? 0 : 1) : 1;
  return shape_[0];
}

std::size_t Tensor::cols() const noexcept {
  if (shape_.empty()) return values_.size();
  return shape_.back();
}

std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(values_).subspan(r * cols(), cols());
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  }
  return values_[0];
}

bool Tensor::same_shape(const Tensor& other) const noexcept {
  return rows() == other.rows() && cols() == other.cols() && size() == other.size();
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + ": expected a rank-2 tensor, got " +
                     shape_string(t.shape()));
  }
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite value");
}

namespace linalg {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros(m, n);
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = bv.data() + p * n;
      double* orow = ov.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(n, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a(i, j);
  return out;
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: row " + shape_string(row.shape()) + " vs matrix " +
                     shape_string(a.shape()));
  }
  Tensor out = a;
  const std::size_t n = a.cols();
  auto ov = out.values();
  auto rv = row.values();
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) ov[i * n + j] += rv[j];
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

double squared_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return s;
}

}  // namespace linalg

}  // namespace gfoes
