#pragma once

// Forgetting and retention metrics: test accuracies on the forgotten and
// retained classes, weight distances to the original model, and feature-space
// dispersion per class.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gfoes/data.hpp"
#include "gfoes/models.hpp"

namespace gfoes {

/// Row-wise argmax; ties go to the lowest class index.
std::vector<int> predict(const ClassifierModel& model, const Tensor& inputs);

double accuracy(const ClassifierModel& model, const LabeledDataset& data);

/// Accuracy per class; absent for classes with no samples.
std::vector<std::optional<double>> per_class_accuracy(const ClassifierModel& model,
                                                      const LabeledDataset& data);

struct ForgetRetain {
  double ad_f = 0.0;
  double ad_r = 0.0;
};

/// AD_f on T_f and AD_r on T_r. Throws InvalidSplitError if T_f holds a
/// retained label or T_r a forgotten one.
ForgetRetain forget_retain_report(const ClassifierModel& model, const LabeledDataset& test_forget,
                                  const LabeledDataset& test_retain, std::span<const int> forgotten);

struct WeightDistances {
  double feature_extractor = 0.0;
  double head = 0.0;
  double all = 0.0;
};

WeightDistances weight_distance_report(const ParameterVector& before, const ParameterVector& after);

struct ClassRepresentation {
  int label = 0;
  bool forgotten = false;
  std::size_t count = 0;
  std::vector<double> centroid;
  std::optional<double> intra;  // mean distance to the class centroid; absent below 2 samples
  std::optional<double> nearest_other;
  std::optional<double> dispersion_ratio;  // intra / nearest_other
};

struct RepresentationReport {
  std::vector<ClassRepresentation> classes;  // one per class present, by label
  Tensor features;
  std::vector<int> labels;

  const ClassRepresentation* find(int label) const;
};

/// Mean Euclidean distance of `rows` of `features` to their centroid. Throws
/// InsufficientSamplesError with fewer than 2 rows.
double mean_intra_distance(const Tensor& features, std::span<const std::size_t> rows);

RepresentationReport representation_report(const ClassifierModel& model, const LabeledDataset& data,
                                           std::span<const int> forgotten);

/// Representation statistics of precomputed features (one row per sample).
RepresentationReport representation_from_features(Tensor features, std::vector<int> labels,
                                                  std::span<const int> forgotten);

/// Feature matrix with labels as CSV `y,f0,...,f{m-1}`.
void write_features_csv(const RepresentationReport& report, const std::filesystem::path& path);

struct MetricsReport {
  ForgetRetain logits;
  std::vector<std::optional<double>> per_class;
  std::optional<WeightDistances> distances;  // absent when there is no reference model
  RepresentationReport representation;
};

/// Everything above for `model` on the test splits; distances are taken to `reference` if given.
MetricsReport evaluate(const ClassifierModel& model, const DatasetSplit& split,
                       const ClassifierModel* reference);

/// The report as JSON with a fixed key order; feature rows are left out
/// (see write_features_csv).
std::string metrics_json(const MetricsReport& report);
void write_metrics_json(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace gfoes
