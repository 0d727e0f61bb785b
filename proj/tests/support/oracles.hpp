#pragma once

// Test-only helpers: random generators and independent reference
// computations. Nothing here calls into the autodiff tape.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gfoes/params.hpp"
#include "gfoes/tensor.hpp"

namespace gfoes::testing {

inline Tensor random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

inline std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n, int classes) {
  std::uniform_int_distribution<int> dist(0, classes - 1);
  std::vector<int> out(n);
  for (int& y : out) y = dist(rng);
  return out;
}

/// ||a - b|| / max(||b||, floor), over every tensor of the two lists.
inline double relative_error(const TensorList& a, const TensorList& b, double floor = 1e-12) {
  double diff = 0.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto av = a[i].value.values();
    auto bv = b[i].value.values();
    for (std::size_t k = 0; k < av.size(); ++k) {
      diff += (av[k] - bv[k]) * (av[k] - bv[k]);
      ref += bv[k] * bv[k];
    }
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), floor);
}

inline double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-12) {
  TensorList la, lb;
  la.add("t", a);
  lb.add("t", b);
  return relative_error(la, lb, floor);
}

/// -log softmax(row)[label], evaluated directly with the naive formula.
inline double naive_cross_entropy(const std::vector<double>& row, int label) {
  double z = 0.0;
  for (double v : row) z += std::exp(v);
  return -std::log(std::exp(row[static_cast<std::size_t>(label)]) / z);
}

/// Plain triple-loop x W + b followed by an optional ReLU.
inline Tensor naive_dense(const Tensor& x, const Tensor& w, const Tensor& b, bool relu) {
  Tensor out = Tensor::zeros(x.rows(), w.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double acc = b(0, j);
      for (std::size_t k = 0; k < x.cols(); ++k) acc += x(i, k) * w(k, j);
      out(i, j) = relu ? std::max(acc, 0.0) : acc;
    }
  }
  return out;
}

}  // namespace gfoes::testing
