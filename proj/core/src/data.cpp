#include "gfoes/data.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gfoes/error.hpp"
#include "gfoes/rng.hpp"

namespace gfoes {

void LabeledDataset::validate() const {
  if (labels.empty()) {
    if (!inputs.empty()) throw ShapeError("dataset: inputs without labels");
    return;
  }
  require_matrix(inputs, "dataset");
  if (inputs.rows() != labels.size()) throw ShapeError("dataset: row count differs from labels");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw InvalidLabelError("dataset: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(num_classes) + ")");
    }
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  const std::size_t d = dim();
  if (indices.empty()) {
    out.inputs = Tensor({0, d}, {});
    return out;
  }
  std::vector<double> values;
  values.reserve(indices.size() * d);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw ShapeError("dataset subset: index out of range");
    auto r = inputs.row(i);
    values.insert(values.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
  }
  out.inputs = Tensor({indices.size(), d}, std::move(values));
  return out;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.dim() != b.dim()) throw ShapeError("concat: datasets differ in dimension");
  LabeledDataset out;
  out.num_classes = std::max(a.num_classes, b.num_classes);
  std::vector<double> values(a.inputs.values().begin(), a.inputs.values().end());
  values.insert(values.end(), b.inputs.values().begin(), b.inputs.values().end());
  out.inputs = Tensor({a.size() + b.size(), a.dim()}, std::move(values));
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

Tensor blob_centers(std::size_t num_classes, std::size_t dim, double separation) {
  if (dim < 2) throw ConfigError("blob_centers: need dimension >= 2");
  Tensor centers = Tensor::zeros(num_classes, dim);
  const double pi = std::acos(-1.0);
  const double radius = separation / (2.0 * std::sin(pi / static_cast<double>(num_classes)));
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double angle = 2.0 * pi * static_cast<double>(k) / static_cast<double>(num_classes);
    centers(k, 0) = radius * std::cos(angle);
    centers(k, 1) = radius * std::sin(angle);
  }
  return centers;
}

LabeledDataset make_blobs(const BlobSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("make_blobs: need at least 2 classes");
  if (spec.dim < 2) throw ConfigError("make_blobs: need dimension >= 2");
  if (spec.per_class == 0) throw ConfigError("make_blobs: per_class must be positive");
  if (!(spec.separation > 0.0) || !(spec.noise_sigma >= 0.0)) {
    throw ConfigError("make_blobs: separation and noise must be positive");
  }
  const Tensor centers = blob_centers(spec.num_classes, spec.dim, spec.separation);
  Rng rng(spec.seed);
  LabeledDataset out;
  out.num_classes = spec.num_classes;
  const std::size_t n = spec.num_classes * spec.per_class;
  Tensor noise = standard_normal(rng, n, spec.dim);
  out.inputs = Tensor::zeros(n, spec.dim);
  out.labels.reserve(n);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      const std::size_t row = k * spec.per_class + i;
      for (std::size_t j = 0; j < spec.dim; ++j) {
        out.inputs(row, j) = centers(k, j) + spec.noise_sigma * noise(row, j);
      }
      out.labels.push_back(static_cast<int>(k));
    }
  }
  return out;
}

bool DatasetSplit::is_forgotten(int label) const {
  return std::find(forgotten.begin(), forgotten.end(), label) != forgotten.end();
}

std::size_t few_shot_count(double fraction, std::size_t n) {
  const auto rounded = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
  return std::min(n, std::max<std::size_t>(1, rounded));
}

namespace {

// Per-class index lists of `labels` restricted to `rows`, in ascending order.
std::vector<std::vector<std::size_t>> by_class(const std::vector<int>& labels,
                                               std::span<const std::size_t> rows,
                                               std::size_t classes) {
  std::vector<std::vector<std::size_t>> out(classes);
  for (std::size_t i : rows) out[static_cast<std::size_t>(labels[i])].push_back(i);
  return out;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

DatasetSplit split_forget(const LabeledDataset& data, const SplitSpec& spec) {
  data.validate();
  if (data.empty()) throw EmptyInputError("split_forget: empty dataset");
  const std::size_t k = data.num_classes;
  std::set<int> forgotten(spec.forgotten.begin(), spec.forgotten.end());
  if (forgotten.empty()) throw InvalidSplitError("split_forget: forgotten label set is empty");
  if (forgotten.size() >= k) throw InvalidSplitError("split_forget: cannot forget every class");
  for (int y : forgotten) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw InvalidSplitError("split_forget: forgotten label " + std::to_string(y) + " out of range");
    }
  }
  if (!(spec.retained_fraction > 0.0 && spec.retained_fraction <= 1.0)) {
    throw InvalidSplitError("split_forget: retained fraction must be in (0, 1]");
  }
  if (!(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0)) {
    throw InvalidSplitError("split_forget: test fraction must be in [0, 1)");
  }

  DatasetSplit split;
  split.forgotten.assign(forgotten.begin(), forgotten.end());
  for (std::size_t c = 0; c < k; ++c)
    if (!forgotten.contains(static_cast<int>(c))) split.retained.push_back(static_cast<int>(c));

  Rng rng(derive_seed(spec.seed, "split"));
  SplitIndices& idx = split.indices;
  const auto all = iota(data.size());
  for (auto& members : by_class(data.labels, all, k)) {
    std::vector<std::size_t> shuffled = members;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto n_test = static_cast<std::size_t>(
        std::floor(spec.test_fraction * static_cast<double>(members.size()) + 0.5));
    idx.test.insert(idx.test.end(), shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_test));
    idx.train.insert(idx.train.end(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_test), shuffled.end());
  }
  std::sort(idx.test.begin(), idx.test.end());
  std::sort(idx.train.begin(), idx.train.end());

  for (std::size_t i : idx.train) {
    (forgotten.contains(data.labels[i]) ? idx.forget : idx.retain).push_back(i);
  }
  for (std::size_t i : idx.test) {
    (forgotten.contains(data.labels[i]) ? idx.test_forget : idx.test_retain).push_back(i);
  }

  for (auto& members : by_class(data.labels, idx.retain, k)) {
    if (members.empty()) continue;
    std::vector<std::size_t> shuffled = members;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const std::size_t count = few_shot_count(spec.retained_fraction, members.size());
    idx.retain_subset.insert(idx.retain_subset.end(), shuffled.begin(),
                             shuffled.begin() + static_cast<std::ptrdiff_t>(count));
  }
  std::sort(idx.retain_subset.begin(), idx.retain_subset.end());

  split.forget = data.subset(idx.forget);
  split.retain = data.subset(idx.retain);
  split.retain_subset = data.subset(idx.retain_subset);
  split.test_forget = data.subset(idx.test_forget);
  split.test_retain = data.subset(idx.test_retain);
  return split;
}

std::vector<int> round_robin_labels(std::span<const int> forgotten, std::size_t count) {
  if (forgotten.empty()) throw InvalidSplitError("round_robin_labels: no forgotten labels");
  std::vector<int> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = forgotten[i % forgotten.size()];
  return out;
}

LabeledDataset assemble_erasure_set(const Tensor& oes, std::span<const int> oes_labels,
                                    const LabeledDataset& retain_subset,
                                    std::span<const int> forgotten, std::uint64_t seed) {
  if (oes_labels.empty() || oes.empty()) {
    throw EmptyInputError("assemble_erasure_set: at least one erasure sample is required");
  }
  if (oes.rows() != oes_labels.size()) {
    throw ShapeError("assemble_erasure_set: sample and label counts differ");
  }
  for (int y : oes_labels) {
    if (std::find(forgotten.begin(), forgotten.end(), y) == forgotten.end()) {
      throw InvalidLabelError("assemble_erasure_set: erasure label " + std::to_string(y) +
                              " is not a forgotten class");
    }
  }
  LabeledDataset synthetic;
  synthetic.inputs = oes;
  synthetic.labels.assign(oes_labels.begin(), oes_labels.end());
  synthetic.num_classes = retain_subset.num_classes;
  synthetic.validate();
  LabeledDataset mixed = concat(synthetic, retain_subset);

  auto order = iota(mixed.size());
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return mixed.subset(order);
}

std::pair<std::vector<double>, std::vector<double>> data_range(const LabeledDataset& data,
                                                               double expand) {
  if (data.empty()) throw EmptyInputError("data_range: empty dataset");
  const std::size_t d = data.dim();
  std::vector<double> lo(d, std::numeric_limits<double>::infinity());
  std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      lo[j] = std::min(lo[j], data.inputs(i, j));
      hi[j] = std::max(hi[j], data.inputs(i, j));
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    double width = hi[j] - lo[j];
    if (!(width > 0.0)) width = 1.0 / (1.0 + expand);
    const double pad = 0.5 * expand * width;
    const double mid = 0.5 * (lo[j] + hi[j]);
    lo[j] = mid - 0.5 * width - pad;
    hi[j] = mid + 0.5 * width + pad;
  }
  return {lo, hi};
}

Tensor uniform_in_range(std::uint64_t seed, std::size_t rows, const std::vector<double>& lower,
                        const std::vector<double>& upper) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tensor out = Tensor::zeros(rows, lower.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < lower.size(); ++j)
      out(i, j) = lower[j] + unit(rng) * (upper[j] - lower[j]);
  return out;
}

// ----------------------------------------------------------------------------
// Files

namespace {

void append_double(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

double parse_double(std::string_view s, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IoError(path.string() + ":" + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

void write_csv(const LabeledDataset& data, const std::filesystem::path& path) {
  std::string text = "y";
  for (std::size_t j = 0; j < data.dim(); ++j) text += ",x" + std::to_string(j);
  text += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    text += std::to_string(data.labels[i]);
    for (double v : data.inputs.row(i)) {
      text += ',';
      append_double(text, v);
    }
    text += '\n';
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

LabeledDataset read_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": missing header");
  const auto header = split_commas(line);
  if (header.empty() || header[0] != "y") throw IoError(path.string() + ": header must start with y");
  const std::size_t d = header.size() - 1;
  LabeledDataset out;
  std::vector<double> values;
  int max_label = -1;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != d + 1) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(d + 1) + " fields");
    }
    int y = 0;
    auto res = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), y);
    if (res.ec != std::errc()) throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad label");
    out.labels.push_back(y);
    max_label = std::max(max_label, y);
    for (std::size_t j = 1; j <= d; ++j) values.push_back(parse_double(fields[j], path, lineno));
  }
  out.num_classes = num_classes.value_or(static_cast<std::size_t>(max_label + 1));
  out.inputs = Tensor({out.labels.size(), d}, std::move(values));
  out.validate();
  return out;
}

void write_manifest(const DatasetSplit& split, const SplitSpec& spec,
                    const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["forgotten_labels"] = split.forgotten;
  j["retained_labels"] = split.retained;
  j["retained_fraction"] = spec.retained_fraction;
  j["test_fraction"] = spec.test_fraction;
  j["seed"] = spec.seed;
  j["train"] = split.indices.train;
  j["test"] = split.indices.test;
  j["forget"] = split.indices.forget;
  j["retain"] = split.indices.retain;
  j["retain_subset"] = split.indices.retain_subset;
  j["test_forget"] = split.indices.test_forget;
  j["test_retain"] = split.indices.test_retain;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

DatasetSplit read_manifest(const LabeledDataset& data, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  DatasetSplit split;
  split.forgotten = j.at("forgotten_labels").get<std::vector<int>>();
  split.retained = j.at("retained_labels").get<std::vector<int>>();
  auto get = [&](const char* key) { return j.at(key).get<std::vector<std::size_t>>(); };
  SplitIndices& idx = split.indices;
  idx.train = get("train");
  idx.test = get("test");
  idx.forget = get("forget");
  idx.retain = get("retain");
  idx.retain_subset = get("retain_subset");
  idx.test_forget = get("test_forget");
  idx.test_retain = get("test_retain");
  split.forget = data.subset(idx.forget);
  split.retain = data.subset(idx.retain);
  split.retain_subset = data.subset(idx.retain_subset);
  split.test_forget = data.subset(idx.test_forget);
  split.test_retain = data.subset(idx.test_retain);
  return split;
}

// ----------------------------------------------------------------------------
// Audit

namespace {
std::atomic<AccessLog*> g_active_log{nullptr};
}

std::uint64_t row_hash(const LabeledDataset& data, std::size_t row) {
  auto r = data.inputs.row(row);
  return fnv1a(r.data(), r.size() * sizeof(double));
}

std::unordered_set<std::uint64_t> row_hashes(const LabeledDataset& data) {
  std::unordered_set<std::uint64_t> out;
  for (std::size_t i = 0; i < data.size(); ++i) out.insert(row_hash(data, i));
  return out;
}

void AccessLog::record(std::string_view consumer, const LabeledDataset& data) {
  AccessRecord rec{std::string(consumer), {}};
  rec.rows.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) rec.rows.push_back(row_hash(data, i));
  std::lock_guard lock(mutex_);
  records_.push_back(std::move(rec));
}

std::vector<AccessRecord> AccessLog::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t AccessLog::violations(const std::unordered_set<std::uint64_t>& forbidden,
                                  std::span<const std::string> whitelist) const {
  std::lock_guard lock(mutex_);
  std::size_t count = 0;
  for (const auto& rec : records_) {
    if (std::find(whitelist.begin(), whitelist.end(), rec.consumer) != whitelist.end()) continue;
    for (std::uint64_t h : rec.rows) count += forbidden.contains(h) ? 1 : 0;
  }
  return count;
}

ScopedAccessLog::ScopedAccessLog(AccessLog& log) : previous_(g_active_log.exchange(&log)) {}

ScopedAccessLog::~ScopedAccessLog() { g_active_log.store(previous_); }

void note_read(std::string_view consumer, const LabeledDataset& data) {
  if (AccessLog* log = g_active_log.load()) log->record(consumer, data);
}

}  // namespace gfoes
