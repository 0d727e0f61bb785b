#pragma once

// Comparison methods run under the same few-shot, zero-glance harness. None
// of them sees forgotten-class data: the methods that need "forget samples"
// use random proxy inputs drawn uniformly over the retained data range.

#include <cstdint>
#include <optional>
#include <string_view>

#include "gfoes/data.hpp"
#include "gfoes/models.hpp"
#include "gfoes/train.hpp"

namespace gfoes {

enum class BaselineMethod { Retrain, NegGrad, RandomLabel, NoiseImpairRepair };

const char* method_name(BaselineMethod method) noexcept;
BaselineMethod parse_method(std::string_view name);

struct BaselineConfig {
  BaselineMethod method = BaselineMethod::NegGrad;
  double learning_rate = 4e-3;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double weight_decay = 1e-4;
  std::optional<double> clip_norm = 0.1;
  ClipMode clip_mode = ClipMode::Value;
  /// Proxy inputs per forgotten class; 0 means the per-class size of D_rs.
  std::size_t proxy_per_class = 0;
  // noise_impair_repair only
  std::size_t noise_steps = 50;
  double noise_rate = 0.1;
  double repair_learning_rate = 4e-4;
  std::size_t repair_epochs = 1;
  std::uint64_t seed = 0;

  void validate() const;
  TrainConfig training(double rate, std::size_t epochs, std::string_view phase) const;
};

/// Fresh model trained on D_rs with the original-model protocol.
ClassifierModel retrain(const ModelSpec& spec, const LabeledDataset& retain_subset,
                        const BaselineConfig& cfg);

/// Gradient ascent on proxy inputs labelled round-robin over Y_f.
ClassifierModel neggrad(const ClassifierModel& theta0, const LabeledDataset& retain_subset,
                        std::span<const int> forgotten, const BaselineConfig& cfg);

/// Descent on proxy inputs whose labels are drawn uniformly from all K classes.
ClassifierModel random_label(const ClassifierModel& theta0, const LabeledDataset& retain_subset,
                             std::span<const int> forgotten, const BaselineConfig& cfg);

/// Learns proxy inputs that maximize theta0's loss on Y_f (impair noise), then
/// fine-tunes on noise + D_rs, then on D_rs alone.
ClassifierModel noise_impair_repair(const ClassifierModel& theta0,
                                    const LabeledDataset& retain_subset,
                                    std::span<const int> forgotten, const BaselineConfig& cfg);

/// Dispatches on cfg.method.
ClassifierModel run_baseline(const ClassifierModel& theta0, const LabeledDataset& retain_subset,
                             std::span<const int> forgotten, const BaselineConfig& cfg);

// Building blocks, exposed for testing.

/// Uniform proxy inputs over the widened data range of D_rs, labelled round-robin over Y_f.
LabeledDataset proxy_noise(const LabeledDataset& retain_subset, std::span<const int> forgotten,
                           std::size_t per_class, std::uint64_t seed);

/// Labels drawn uniformly from [0, num_classes).
std::vector<int> uniform_labels(std::size_t count, std::size_t num_classes, std::uint64_t seed);

/// `steps` of x <- clamp(x + rate * d(sum of per-sample losses)/dx) within the
/// data range, for theta0 and the labels of `noise`.
LabeledDataset optimize_noise(const ClassifierModel& theta0, LabeledDataset noise,
                              const std::vector<double>& lower, const std::vector<double>& upper,
                              std::size_t steps, double rate);

}  // namespace gfoes
