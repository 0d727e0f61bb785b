#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace gfoes {

/// Dense row-major tensor of doubles.
///
/// Every arithmetic routine in this library works on rank-2 tensors; scalars
/// are 1x1 and vectors are 1xN. Higher ranks can be stored but not operated on.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor filled(std::size_t rows, std::size_t cols, double value);
  static Tensor scalar(double value);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  std::size_t rank() const noexcept { return shape_.size(); }

  // Rank-2 accessors. Rank-0/1 tensors are viewed as a single row.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> row(std::size_t r) const;

  /// Value of a one-element tensor.
  double item() const;

  bool same_shape(const Tensor& other) const noexcept;
  bool all_finite() const noexcept;
  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

/// Throws ShapeError unless `t` is rank 2.
void require_matrix(const Tensor& t, const char* what);
/// Throws NumericError when any value of `t` is NaN or infinite.
void require_finite(const Tensor& t, const char* what);

// Plain (non-recording) matrix arithmetic shared by the autodiff tape and by
// evaluation code that never needs gradients.
namespace linalg {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// a + row, with `row` (1xN) broadcast over every row of `a`.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor relu(const Tensor& a);
double squared_norm(const Tensor& a);

}  // namespace linalg

}  // namespace gfoes
