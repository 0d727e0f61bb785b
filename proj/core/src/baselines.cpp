#include "gfoes/baselines.hpp"

#include <algorithm>

#include "gfoes/error.hpp"
#include "gfoes/rng.hpp"

namespace gfoes {

const char* method_name(BaselineMethod method) noexcept {
  switch (method) {
    case BaselineMethod::Retrain: return "retrain";
    case BaselineMethod::NegGrad: return "neggrad";
    case BaselineMethod::RandomLabel: return "random_label";
    case BaselineMethod::NoiseImpairRepair: return "noise_impair_repair";
  }
  return "retrain";
}

BaselineMethod parse_method(std::string_view name) {
  for (auto m : {BaselineMethod::Retrain, BaselineMethod::NegGrad, BaselineMethod::RandomLabel,
                 BaselineMethod::NoiseImpairRepair}) {
    if (name == method_name(m)) return m;
  }
  throw ConfigError("unknown baseline method '" + std::string(name) + "'");
}

void BaselineConfig::validate() const {
  if (!(learning_rate >= 0.0) || !(repair_learning_rate >= 0.0) || !(noise_rate >= 0.0)) {
    throw ConfigError("baseline: rates must be non-negative");
  }
  if (batch_size == 0) throw ConfigError("baseline: batch_size must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("baseline: weight_decay must be non-negative");
  if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("baseline: clip_norm must be positive");
}

TrainConfig BaselineConfig::training(double rate, std::size_t n_epochs, std::string_view phase) const {
  TrainConfig t;
  t.step = OptimStep{rate, weight_decay, clip_norm, clip_mode};
  t.epochs = n_epochs;
  t.batch_size = batch_size;
  t.seed = derive_seed(seed, method_name(method), phase);
  return t;
}

namespace {

std::size_t proxy_count(const LabeledDataset& retain_subset, const BaselineConfig& cfg) {
  if (cfg.proxy_per_class) return cfg.proxy_per_class;
  const auto counts = retain_subset.class_counts();
  return std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end()));
}

void check_inputs(const LabeledDataset& retain_subset, std::span<const int> forgotten,
                  const BaselineConfig& cfg, const char* who) {
  cfg.validate();
  if (retain_subset.empty()) throw EmptyInputError(std::string(who) + ": retained subset is empty");
  if (forgotten.empty()) throw InvalidSplitError(std::string(who) + ": no forgotten labels");
  note_read(who, retain_subset);
}

}  // namespace

LabeledDataset proxy_noise(const LabeledDataset& retain_subset, std::span<const int> forgotten,
                           std::size_t per_class, std::uint64_t seed) {
  if (per_class == 0) throw EmptyInputError("proxy_noise: need at least one proxy per class");
  const auto [lo, hi] = data_range(retain_subset, 0.10);
  const std::size_t count = per_class * forgotten.size();
  LabeledDataset out;
  out.inputs = uniform_in_range(seed, count, lo, hi);
  out.labels = round_robin_labels(forgotten, count);
  out.num_classes = retain_subset.num_classes;
  return out;
}

std::vector<int> uniform_labels(std::size_t count, std::size_t num_classes, std::uint64_t seed) {
  if (num_classes == 0) throw ConfigError("uniform_labels: no classes");
  Rng rng(seed);
  std::uniform_int_distribution<int> dist(0, static_cast<int>(num_classes) - 1);
  std::vector<int> out(count);
  for (int& y : out) y = dist(rng);
  return out;
}

LabeledDataset optimize_noise(const ClassifierModel& theta0, LabeledDataset noise,
                              const std::vector<double>& lower, const std::vector<double>& upper,
                              std::size_t steps, double rate) {
  const double n = static_cast<double>(noise.size());
  for (std::size_t s = 0; s < steps; ++s) {
    Tape tape;
    std::vector<Var> theta;
    for (const auto& p : theta0.params()) theta.push_back(tape.constant(p.value));
    const Var x = tape.variable(noise.inputs);
    const Var loss =
        cross_entropy(classifier_forward(theta, theta0.feature_layers(), x).logits, noise.labels);
    const Var gx = grad(loss, std::span<const Var>(&x, 1))[0];
    const Tensor& g = gx.value();
    for (std::size_t i = 0; i < noise.size(); ++i) {
      for (std::size_t j = 0; j < noise.dim(); ++j) {
        const double v = noise.inputs(i, j) + rate * n * g(i, j);
        noise.inputs(i, j) = std::clamp(v, lower[j], upper[j]);
      }
    }
  }
  return noise;
}

ClassifierModel retrain(const ModelSpec& spec, const LabeledDataset& retain_subset,
                        const BaselineConfig& cfg) {
  cfg.validate();
  if (retain_subset.empty()) throw EmptyInputError("retrain: retained subset is empty");
  note_read("retrain", retain_subset);
  ModelSpec fresh = spec;
  fresh.seed = derive_seed(cfg.seed, "retrain", "init");
  ClassifierModel model = init_model(fresh);
  fit(model, retain_subset, original_protocol(derive_seed(cfg.seed, "retrain", "fit")));
  return model;
}

ClassifierModel neggrad(const ClassifierModel& theta0, const LabeledDataset& retain_subset,
                        std::span<const int> forgotten, const BaselineConfig& cfg) {
  check_inputs(retain_subset, forgotten, cfg, "neggrad");
  const LabeledDataset proxies = proxy_noise(retain_subset, forgotten, proxy_count(retain_subset, cfg),
                                             derive_seed(cfg.seed, "neggrad", "proxy"));
  ClassifierModel model = theta0;
  TrainConfig t = cfg.training(cfg.learning_rate, cfg.epochs, "ascent");
  t.ascend = true;
  fit(model, proxies, t);
  return model;
}

ClassifierModel random_label(const ClassifierModel& theta0, const LabeledDataset& retain_subset,
                             std::span<const int> forgotten, const BaselineConfig& cfg) {
  check_inputs(retain_subset, forgotten, cfg, "random_label");
  LabeledDataset proxies = proxy_noise(retain_subset, forgotten, proxy_count(retain_subset, cfg),
                                       derive_seed(cfg.seed, "random_label", "proxy"));
  proxies.labels = uniform_labels(proxies.size(), theta0.spec().num_classes,
                                  derive_seed(cfg.seed, "random_label", "labels"));
  ClassifierModel model = theta0;
  fit(model, proxies, cfg.training(cfg.learning_rate, cfg.epochs, "descent"));
  return model;
}

ClassifierModel noise_impair_repair(const ClassifierModel& theta0,
                                    const LabeledDataset& retain_subset,
                                    std::span<const int> forgotten, const BaselineConfig& cfg) {
  check_inputs(retain_subset, forgotten, cfg, "noise_impair_repair");
  const auto [lo, hi] = data_range(retain_subset, 0.10);
  LabeledDataset noise =
      proxy_noise(retain_subset, forgotten, proxy_count(retain_subset, cfg),
                  derive_seed(cfg.seed, "noise_impair_repair", "proxy"));
  noise = optimize_noise(theta0, std::move(noise), lo, hi, cfg.noise_steps, cfg.noise_rate);

  const LabeledDataset impair_set = assemble_erasure_set(
      noise.inputs, noise.labels, retain_subset, forgotten,
      derive_seed(cfg.seed, "noise_impair_repair", "mix"));
  ClassifierModel model = theta0;
  fit(model, impair_set, cfg.training(cfg.learning_rate, cfg.epochs, "impair"));
  fit(model, retain_subset, cfg.training(cfg.repair_learning_rate, cfg.repair_epochs, "repair"));
  return model;
}

ClassifierModel run_baseline(const ClassifierModel& theta0, const LabeledDataset& retain_subset,
                             std::span<const int> forgotten, const BaselineConfig& cfg) {
  switch (cfg.method) {
    case BaselineMethod::Retrain: return retrain(theta0.spec(), retain_subset, cfg);
    case BaselineMethod::NegGrad: return neggrad(theta0, retain_subset, forgotten, cfg);
    case BaselineMethod::RandomLabel: return random_label(theta0, retain_subset, forgotten, cfg);
    case BaselineMethod::NoiseImpairRepair:
      return noise_impair_repair(theta0, retain_subset, forgotten, cfg);
  }
  throw ConfigError("unknown baseline method");
}

}  // namespace gfoes
