#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "gfoes/tensor.hpp"

namespace gfoes {

struct LabeledDataset {
  Tensor inputs;            // n x d
  std::vector<int> labels;  // n entries in [0, num_classes)
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return inputs.cols(); }
  bool empty() const noexcept { return labels.empty(); }

  /// Throws unless shapes agree and every label is in range. Empty sets are allowed.
  void validate() const;
  /// Rows `indices`, in that order.
  LabeledDataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
};

/// Concatenates `b` below `a`.
LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b);

struct BlobSpec {
  std::size_t num_classes = 5;
  std::size_t dim = 16;
  std::size_t per_class = 625;
  double separation = 8.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
};

/// Class centres: vertices of a regular K-gon with side `separation` in the
/// plane of the first two coordinates, so every pair is at least `separation`
/// apart. The remaining coordinates carry noise only.
Tensor blob_centers(std::size_t num_classes, std::size_t dim, double separation);

/// Isotropic Gaussian blobs, class-major order, deterministic in spec.seed.
LabeledDataset make_blobs(const BlobSpec& spec);

struct SplitSpec {
  std::vector<int> forgotten;       // Y_f
  double retained_fraction = 0.10;  // e
  double test_fraction = 0.20;      // stratified holdout taken before partitioning
  std::uint64_t seed = 0;
};

/// Row indices (into the source dataset) of every split.
struct SplitIndices {
  std::vector<std::size_t> train, test, forget, retain, retain_subset, test_forget, test_retain;
};

struct DatasetSplit {
  std::vector<int> forgotten;
  std::vector<int> retained;
  LabeledDataset forget;         // D_f, evaluation/audit only
  LabeledDataset retain;         // D_r
  LabeledDataset retain_subset;  // D_rs, the only training data unlearning may read
  LabeledDataset test_forget;    // T_f
  LabeledDataset test_retain;    // T_r
  SplitIndices indices;

  bool is_forgotten(int label) const;
};

/// Few-shot count for a class of size n: round-half-up(e * n), at least 1.
std::size_t few_shot_count(double fraction, std::size_t n);

DatasetSplit split_forget(const LabeledDataset& data, const SplitSpec& spec);

/// OES rows (all labelled in `forgotten`) and D_rs, concatenated and shuffled by `seed`.
LabeledDataset assemble_erasure_set(const Tensor& oes, std::span<const int> oes_labels,
                                    const LabeledDataset& retain_subset,
                                    std::span<const int> forgotten, std::uint64_t seed);

/// Round-robin assignment of `count` labels over `forgotten`.
std::vector<int> round_robin_labels(std::span<const int> forgotten, std::size_t count);

/// Per-dimension [min, max] of `data`, widened by `expand` of the width
/// (half on each side). Degenerate dimensions get width 1.
std::pair<std::vector<double>, std::vector<double>> data_range(const LabeledDataset& data,
                                                               double expand = 0.10);

/// Uniform draws inside [lower, upper] per dimension.
Tensor uniform_in_range(std::uint64_t seed, std::size_t rows, const std::vector<double>& lower,
                        const std::vector<double>& upper);

// CSV with header `y,x0,...,x{d-1}`; values written with round-trip precision.
void write_csv(const LabeledDataset& data, const std::filesystem::path& path);
LabeledDataset read_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes = {});

void write_manifest(const DatasetSplit& split, const SplitSpec& spec,
                    const std::filesystem::path& path);
/// Rebuilds a split from the full dataset and a manifest written by write_manifest.
DatasetSplit read_manifest(const LabeledDataset& data, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Zero-glance audit.
//
// Every unlearning or baseline routine reports the datasets it reads through
// note_read(). When an AccessLog is installed, it stores content hashes of
// every row read, so a run can be checked against the forget set afterwards.

std::uint64_t row_hash(const LabeledDataset& data, std::size_t row);
std::unordered_set<std::uint64_t> row_hashes(const LabeledDataset& data);

struct AccessRecord {
  std::string consumer;
  std::vector<std::uint64_t> rows;
};

class AccessLog {
 public:
  void record(std::string_view consumer, const LabeledDataset& data);
  std::vector<AccessRecord> records() const;
  /// Number of rows read by consumers outside `whitelist` whose hash is in `forbidden`.
  std::size_t violations(const std::unordered_set<std::uint64_t>& forbidden,
                         std::span<const std::string> whitelist = {}) const;

 private:
  mutable std::mutex mutex_;
  std::vector<AccessRecord> records_;
};

/// Installs `log` as the process-wide audit sink for its lifetime.
class ScopedAccessLog {
 public:
  explicit ScopedAccessLog(AccessLog& log);
  ~ScopedAccessLog();
  ScopedAccessLog(const ScopedAccessLog&) = delete;
  ScopedAccessLog& operator=(const ScopedAccessLog&) = delete;

 private:
  AccessLog* previous_;
};

void note_read(std::string_view consumer, const LabeledDataset& data);

}  // namespace gfoes
