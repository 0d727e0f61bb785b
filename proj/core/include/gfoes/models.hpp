#pragma once

// Dense classifier with an explicit feature-extractor / head split, and the
// noise-to-input generator used to synthesize erasure samples.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gfoes/autodiff.hpp"
#include "gfoes/params.hpp"

namespace gfoes {

struct ModelSpec {
  std::size_t input_dim = 16;
  /// Widths of the affine+ReLU feature layers; the last one is the feature dimension.
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t num_classes = 5;
  std::size_t z_dim = 16;
  std::vector<std::size_t> generator_hidden = {64, 64};
  /// Per-dimension bounds the generator output is scaled into. Empty means [-1, 1].
  std::vector<double> data_lower;
  std::vector<double> data_upper;
  std::string init = "glorot_uniform";
  std::uint64_t seed = 0;

  std::size_t feature_dim() const { return hidden.back(); }
  void validate() const;

  bool operator==(const ModelSpec&) const = default;
};

enum class ModelPart { FeatureExtractor, Head, All };

const char* part_name(ModelPart part) noexcept;

class ClassifierModel {
 public:
  ClassifierModel() = default;
  ClassifierModel(ModelSpec spec, ParameterVector params);

  const ModelSpec& spec() const noexcept { return spec_; }
  const ParameterVector& params() const noexcept { return params_; }
  ParameterVector& params() noexcept { return params_; }
  std::size_t feature_layers() const noexcept { return spec_.hidden.size(); }

  /// True when parameter `name` belongs to `part`.
  static bool in_part(std::string_view name, ModelPart part);

 private:
  ModelSpec spec_;
  ParameterVector params_;
};

class Generator {
 public:
  Generator() = default;
  Generator(ModelSpec spec, ParameterVector params);

  const ModelSpec& spec() const noexcept { return spec_; }
  const ParameterVector& params() const noexcept { return params_; }
  ParameterVector& params() noexcept { return params_; }
  /// 1 x d centre and half-width of the output range.
  const Tensor& center() const noexcept { return center_; }
  const Tensor& half_width() const noexcept { return half_width_; }

 private:
  ModelSpec spec_;
  ParameterVector params_;
  Tensor center_;
  Tensor half_width_;
};

/// Glorot-uniform weights, zero biases, deterministic in spec.seed.
ClassifierModel init_model(const ModelSpec& spec);
/// Same scheme as init_model, seeded with `seed`.
Generator init_generator(const ModelSpec& spec, std::uint64_t seed);

struct ForwardResult {
  Tensor features;
  Tensor logits;
};

ForwardResult classifier_forward(const ClassifierModel& model, const Tensor& batch);
Tensor generator_forward(const Generator& gen, const Tensor& z);

struct ForwardVars {
  Var features;
  Var logits;
};

/// Differentiable classifier pass; `params` are the model's tensors bound on
/// a tape, in ParameterVector order.
ForwardVars classifier_forward(std::span<const Var> params, std::size_t feature_layers, Var batch);
/// Differentiable generator pass; `center`/`half_width` are 1 x d.
Var generator_forward(std::span<const Var> params, const Tensor& center, const Tensor& half_width,
                      Var z);

/// Euclidean norm of (a - b) restricted to `part` of a classifier layout.
double param_distance(const ParameterVector& a, const ParameterVector& b, ModelPart part);

void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_classifier(const std::filesystem::path& path);
void save_model(const Generator& gen, const std::filesystem::path& path);
Generator load_generator(const std::filesystem::path& path);

}  // namespace gfoes
