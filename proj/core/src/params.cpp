#include "gfoes/params.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "gfoes/error.hpp"

namespace gfoes {

void TensorList::add(std::string name, Tensor value) {
  if (contains(name)) throw ShapeError("duplicate tensor name '" + name + "'");
  entries_.push_back({std::move(name), std::move(value)});
}

std::size_t TensorList::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool TensorList::contains(std::string_view name) const noexcept {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const NamedTensor& e) { return e.name == name; });
}

const Tensor& TensorList::at(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.value;
  throw ShapeError("no tensor named '" + std::string(name) + "'");
}

Tensor& TensorList::at(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

std::vector<double> TensorList::flatten() const {
  std::vector<double> flat;
  flat.reserve(scalar_count());
  for (const auto& e : entries_) flat.insert(flat.end(), e.value.values().begin(), e.value.values().end());
  return flat;
}

void TensorList::assign_flat(std::span<const double> flat) {
  if (flat.size() != scalar_count()) {
    throw ShapeError("assign_flat: expected " + std::to_string(scalar_count()) + " values, got " +
                     std::to_string(flat.size()));
  }
  std::size_t offset = 0;
  for (auto& e : entries_) {
    auto dst = e.value.values();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
    offset += dst.size();
  }
}

bool TensorList::same_layout(const TensorList& other) const noexcept {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (entries_[i].name != other.entries_[i].name ||
        entries_[i].value.shape() != other.entries_[i].value.shape()) {
      return false;
    }
  }
  return true;
}

double global_norm(const TensorList& list) {
  double s = 0.0;
  for (const auto& e : list) s += linalg::squared_norm(e.value);
  return std::sqrt(s);
}

}  // namespace gfoes
