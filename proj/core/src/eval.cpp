#include "gfoes/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "gfoes/error.hpp"
#include "json_io.hpp"

namespace gfoes {

std::vector<int> predict(const ClassifierModel& model, const Tensor& inputs) {
  const Tensor logits = classifier_forward(model, inputs).logits;
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.cols(); ++k)
      if (logits(i, k) > logits(i, best)) best = k;
    out[i] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const ClassifierModel& model, const LabeledDataset& data) {
  if (data.empty()) throw EmptyInputError("accuracy: empty dataset");
  const auto pred = predict(model, data.inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += pred[i] == data.labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<std::optional<double>> per_class_accuracy(const ClassifierModel& model,
                                                      const LabeledDataset& data) {
  std::vector<std::size_t> total(model.spec().num_classes, 0), correct(model.spec().num_classes, 0);
  if (!data.empty()) {
    const auto pred = predict(model, data.inputs);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto y = static_cast<std::size_t>(data.labels[i]);
      ++total.at(y);
      correct[y] += pred[i] == data.labels[i] ? 1 : 0;
    }
  }
  std::vector<std::optional<double>> out(total.size());
  for (std::size_t k = 0; k < total.size(); ++k)
    if (total[k]) out[k] = static_cast<double>(correct[k]) / static_cast<double>(total[k]);
  return out;
}

ForgetRetain forget_retain_report(const ClassifierModel& model, const LabeledDataset& test_forget,
                                  const LabeledDataset& test_retain,
                                  std::span<const int> forgotten) {
  auto is_forgotten = [&](int y) {
    return std::find(forgotten.begin(), forgotten.end(), y) != forgotten.end();
  };
  for (int y : test_forget.labels)
    if (!is_forgotten(y)) throw InvalidSplitError("forget_retain_report: T_f holds retained label " + std::to_string(y));
  for (int y : test_retain.labels)
    if (is_forgotten(y)) throw InvalidSplitError("forget_retain_report: T_r holds forgotten label " + std::to_string(y));
  note_read("evaluate", test_forget);
  note_read("evaluate", test_retain);
  return {accuracy(model, test_forget), accuracy(model, test_retain)};
}

WeightDistances weight_distance_report(const ParameterVector& before, const ParameterVector& after) {
  return {param_distance(before, after, ModelPart::FeatureExtractor),
          param_distance(before, after, ModelPart::Head), param_distance(before, after, ModelPart::All)};
}

const ClassRepresentation* RepresentationReport::find(int label) const {
  for (const auto& c : classes)
    if (c.label == label) return &c;
  return nullptr;
}

double mean_intra_distance(const Tensor& features, std::span<const std::size_t> rows) {
  if (rows.size() < 2) throw InsufficientSamplesError("intra-class distance needs at least 2 samples");
  const std::size_t m = features.cols();
  std::vector<double> centroid(m, 0.0);
  for (std::size_t i : rows)
    for (std::size_t j = 0; j < m; ++j) centroid[j] += features(i, j);
  for (double& c : centroid) c /= static_cast<double>(rows.size());
  double total = 0.0;
  for (std::size_t i : rows) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += (features(i, j) - centroid[j]) * (features(i, j) - centroid[j]);
    total += std::sqrt(s);
  }
  return total / static_cast<double>(rows.size());
}

RepresentationReport representation_from_features(Tensor features, std::vector<int> labels,
                                                  std::span<const int> forgotten) {
  require_matrix(features, "representation_report");
  if (features.rows() != labels.size()) throw ShapeError("representation_report: label count differs");
  if (labels.empty()) throw EmptyInputError("representation_report: empty dataset");
  const std::size_t m = features.cols();
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);

  RepresentationReport report;
  for (const auto& [label, rows] : members) {
    ClassRepresentation c;
    c.label = label;
    c.forgotten = std::find(forgotten.begin(), forgotten.end(), label) != forgotten.end();
    c.count = rows.size();
    c.centroid.assign(m, 0.0);
    for (std::size_t i : rows)
      for (std::size_t j = 0; j < m; ++j) c.centroid[j] += features(i, j);
    for (double& v : c.centroid) v /= static_cast<double>(rows.size());
    try {
      c.intra = mean_intra_distance(features, rows);
    } catch (const InsufficientSamplesError&) {
    }
    report.classes.push_back(std::move(c));
  }
  for (auto& c : report.classes) {
    for (const auto& other : report.classes) {
      if (other.label == c.label) continue;
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += (c.centroid[j] - other.centroid[j]) * (c.centroid[j] - other.centroid[j]);
      const double d = std::sqrt(s);
      if (!c.nearest_other || d < *c.nearest_other) c.nearest_other = d;
    }
    if (c.intra && c.nearest_other && *c.nearest_other > 0.0) c.dispersion_ratio = *c.intra / *c.nearest_other;
  }
  report.features = std::move(features);
  report.labels = std::move(labels);
  return report;
}

RepresentationReport representation_report(const ClassifierModel& model, const LabeledDataset& data,
                                           std::span<const int> forgotten) {
  if (data.empty()) throw EmptyInputError("representation_report: empty dataset");
  note_read("evaluate", data);
  return representation_from_features(classifier_forward(model, data.inputs).features, data.labels,
                                      forgotten);
}

void write_features_csv(const RepresentationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << 'y';
  for (std::size_t j = 0; j < report.features.cols(); ++j) out << ",f" << j;
  out << '\n';
  char buf[40];
  for (std::size_t i = 0; i < report.labels.size(); ++i) {
    out << report.labels[i];
    for (double v : report.features.row(i)) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

MetricsReport evaluate(const ClassifierModel& model, const DatasetSplit& split,
                       const ClassifierModel* reference) {
  MetricsReport r;
  r.logits = forget_retain_report(model, split.test_forget, split.test_retain, split.forgotten);
  const LabeledDataset test = concat(split.test_forget, split.test_retain);
  r.per_class = per_class_accuracy(model, test);
  if (reference) r.distances = weight_distance_report(reference->params(), model.params());
  r.representation = representation_report(model, test, split.forgotten);
  return r;
}

namespace {

ordered_json optional_number(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

}  // namespace

std::string metrics_json(const MetricsReport& report) {
  ordered_json j;
  j["ad_f"] = report.logits.ad_f;
  j["ad_r"] = report.logits.ad_r;
  ordered_json per_class = ordered_json::array();
  for (const auto& a : report.per_class) per_class.push_back(optional_number(a));
  j["per_class_accuracy"] = per_class;
  if (report.distances) {
    j["weight_distance"] = {{"feature_extractor", report.distances->feature_extractor},
                            {"head", report.distances->head},
                            {"all", report.distances->all}};
  }
  ordered_json classes = ordered_json::array();
  for (const auto& c : report.representation.classes) {
    classes.push_back({{"label", c.label},
                       {"forgotten", c.forgotten},
                       {"count", c.count},
                       {"centroid", c.centroid},
                       {"intra", optional_number(c.intra)},
                       {"nearest_other", optional_number(c.nearest_other)},
                       {"dispersion_ratio", optional_number(c.dispersion_ratio)}});
  }
  j["representation"] = classes;
  return j.dump(2);
}

void write_metrics_json(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << metrics_json(report) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace gfoes
