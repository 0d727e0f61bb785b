#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "gfoes/tensor.hpp"

namespace gfoes {

struct NamedTensor {
  std::string name;
  Tensor value;

  bool operator==(const NamedTensor&) const = default;
};

/// Ordered collection of named tensors. Insertion order is the canonical
/// order for flattening, serialization and iteration.
class TensorList {
 public:
  void add(std::string name, Tensor value);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  /// Total number of scalars across all tensors.
  std::size_t scalar_count() const noexcept;

  bool contains(std::string_view name) const noexcept;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  const NamedTensor& operator[](std::size_t i) const { return entries_[i]; }
  NamedTensor& operator[](std::size_t i) { return entries_[i]; }

  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }

  std::vector<double> flatten() const;
  /// Overwrites values from `flat`, which must hold exactly scalar_count() values.
  void assign_flat(std::span<const double> flat);

  /// Same names, same order, same shapes.
  bool same_layout(const TensorList& other) const noexcept;

  bool operator==(const TensorList&) const = default;

 private:
  std::vector<NamedTensor> entries_;
};

/// Trainable parameters of a model (classifier weights, generator weights).
class ParameterVector : public TensorList {};

/// Gradients keyed by parameter name, each shaped like its parameter.
class GradientMap : public TensorList {};

/// Global L2 norm over every tensor of the list.
double global_norm(const TensorList& list);

}  // namespace gfoes
