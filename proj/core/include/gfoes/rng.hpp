#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "gfoes/tensor.hpp"

namespace gfoes {

using Rng = std::mt19937_64;

/// Stable 64-bit child seed for (master, tag, cell). Adding a new tag never
/// changes the seeds of existing tags.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::string_view cell = {});

/// rows x cols matrix of independent N(0, 1) draws.
Tensor standard_normal(Rng& rng, std::size_t rows, std::size_t cols);

/// FNV-1a over raw bytes; used for content hashes of data rows and snapshots.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_tensor(const Tensor& t);

}  // namespace gfoes
