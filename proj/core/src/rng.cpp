#include "gfoes/rng.hpp"

#include <array>
#include <cstring>

namespace gfoes {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_tensor(const Tensor& t) {
  std::uint64_t h = fnv1a(t.shape().data(), t.shape().size() * sizeof(std::size_t));
  return fnv1a(t.values().data(), t.values().size() * sizeof(double), h);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::string_view cell) {
  std::array<unsigned char, 8> le{};
  for (std::size_t i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>(master >> (8 * i));
  std::uint64_t h = fnv1a(le.data(), le.size());
  h = fnv1a(tag.data(), tag.size(), h);
  const unsigned char sep = 0x1f;
  h = fnv1a(&sep, 1, h);
  h = fnv1a(cell.data(), cell.size(), h);
  return splitmix64(h);
}

Tensor standard_normal(Rng& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace gfoes
