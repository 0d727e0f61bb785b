#include "gfoes/unlearn.hpp"

#include <algorithm>
#include <fstream>

#include "gfoes/error.hpp"
#include "gfoes/rng.hpp"
#include "json_io.hpp"

namespace gfoes {

const char* erasure_data_name(ErasureData data) noexcept {
  switch (data) {
    case ErasureData::OesAndRetained: return "oes+retained";
    case ErasureData::OesOnly: return "oes";
    case ErasureData::RetainedOnly: return "retained";
  }
  return "oes+retained";
}

ErasureData parse_erasure_data(std::string_view name) {
  if (name == "oes+retained") return ErasureData::OesAndRetained;
  if (name == "oes") return ErasureData::OesOnly;
  if (name == "retained") return ErasureData::RetainedOnly;
  throw ConfigError("unknown erasure data '" + std::string(name) +
                    "' (expected oes+retained, oes or retained)");
}

void UnlearnConfig::validate() const {
  if (!(eta_high >= 0.0) || !(eta_low >= 0.0)) throw ConfigError("unlearn: rates must be non-negative");
  if (batch_size == 0) throw ConfigError("unlearn: batch_size must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("unlearn: weight_decay must be non-negative");
  if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("unlearn: clip_norm must be positive");
}

TrainConfig UnlearnConfig::erasure_training() const {
  TrainConfig t;
  t.step = OptimStep{eta_high, weight_decay, clip_norm, clip_mode};
  t.epochs = erasure_epochs;
  t.batch_size = batch_size;
  t.seed = derive_seed(seed, "erasure");
  return t;
}

TrainConfig UnlearnConfig::recovery_training() const {
  TrainConfig t;
  t.step = OptimStep{eta_low, weight_decay, clip_norm, clip_mode};
  t.epochs = recovery_epochs;
  t.batch_size = batch_size;
  t.seed = derive_seed(seed, "recovery");
  return t;
}

std::uint64_t UnlearnConfig::oes_seed() const { return derive_seed(seed, "oes"); }

std::size_t default_oes_count(const LabeledDataset& retain_subset, std::size_t forgotten_count) {
  const auto counts = retain_subset.class_counts();
  const std::size_t per_class = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  return std::max<std::size_t>(1, per_class) * forgotten_count;
}

namespace {

void require_retained_only(const LabeledDataset& retain_subset, std::span<const int> forgotten,
                           const char* where) {
  for (int y : retain_subset.labels) {
    if (std::find(forgotten.begin(), forgotten.end(), y) != forgotten.end()) {
      throw ZeroGlanceViolation(std::string(where) + ": retained subset carries forgotten label " +
                                std::to_string(y));
    }
  }
}

std::uint64_t hash_dataset(const LabeledDataset& data) {
  if (data.empty()) return 0;
  const std::uint64_t h = hash_tensor(data.inputs);
  return fnv1a(data.labels.data(), data.labels.size() * sizeof(int), h);
}

}  // namespace

ErasureResult erasure_phase(const ClassifierModel& theta0, const LabeledDataset& oes,
                            const LabeledDataset& retain_subset, std::span<const int> forgotten,
                            const UnlearnConfig& cfg) {
  cfg.validate();
  if (retain_subset.empty()) throw EmptyInputError("erasure_phase: retained subset is empty");
  require_retained_only(retain_subset, forgotten, "erasure_phase");
  note_read("erasure_phase", retain_subset);

  LabeledDataset train_set;
  switch (cfg.erasure_data) {
    case ErasureData::OesAndRetained:
      train_set = assemble_erasure_set(oes.inputs, oes.labels, retain_subset, forgotten,
                                       derive_seed(cfg.seed, "erasure-mix"));
      break;
    case ErasureData::OesOnly:
    {
      LabeledDataset none;
      none.num_classes = retain_subset.num_classes;
      train_set = assemble_erasure_set(oes.inputs, oes.labels, none, forgotten,
                                       derive_seed(cfg.seed, "erasure-mix"));
      break;
    }
    case ErasureData::RetainedOnly:
      train_set = retain_subset;
      break;
  }
  ErasureResult out{theta0, oes, {}};
  out.losses = fit(out.theta1, train_set, cfg.erasure_training());
  return out;
}

ErasureResult erasure_phase(const ClassifierModel& theta0, const Generator& gen,
                            const LabeledDataset& retain_subset, std::span<const int> forgotten,
                            const UnlearnConfig& cfg) {
  LabeledDataset oes;
  if (cfg.erasure_data != ErasureData::RetainedOnly) {
    const std::size_t count =
        cfg.oes_count ? cfg.oes_count : default_oes_count(retain_subset, forgotten.size());
    oes = generate_oes(gen, count, forgotten, theta0.spec().num_classes, cfg.oes_seed());
  }
  return erasure_phase(theta0, oes, retain_subset, forgotten, cfg);
}

RecoveryResult recovery_phase(const ClassifierModel& theta1, const LabeledDataset& retain_subset,
                              std::span<const int> forgotten, const UnlearnConfig& cfg) {
  cfg.validate();
  if (retain_subset.empty()) throw EmptyInputError("recovery_phase: retained subset is empty");
  require_retained_only(retain_subset, forgotten, "recovery_phase");
  note_read("recovery_phase", retain_subset);
  RecoveryResult out{theta1, {}};
  out.losses = fit(out.theta_star, retain_subset, cfg.recovery_training());
  return out;
}

UnlearnResult gfoes_unlearn(const ClassifierModel& theta0, const LabeledDataset& retain_subset,
                            std::span<const int> forgotten, const GfnConfig& gfn_cfg,
                            const UnlearnConfig& cfg) {
  cfg.validate();
  UnlearnResult out;
  ErasureResult erased;
  if (cfg.erasure_data == ErasureData::RetainedOnly) {
    erased = erasure_phase(theta0, LabeledDataset{}, retain_subset, forgotten, cfg);
  } else {
    GfnResult gfn = train_gfn(theta0, retain_subset, forgotten, gfn_cfg);
    erased = erasure_phase(theta0, gfn.generator, retain_subset, forgotten, cfg);
    out.trace = std::move(gfn.trace);
    out.generator = std::move(gfn.generator);
  }
  RecoveryResult recovered = recovery_phase(erased.theta1, retain_subset, forgotten, cfg);

  UnlearnRecord& rec = out.record;
  rec.theta0_hash = hash_params(theta0.params());
  rec.theta1 = erased.theta1.params();
  rec.theta_star = recovered.theta_star.params();
  rec.erasure_losses = std::move(erased.losses);
  rec.recovery_losses = std::move(recovered.losses);
  rec.config = cfg;
  rec.oes_count = erased.oes.size();
  rec.oes_hash = hash_dataset(erased.oes);
  out.theta1 = std::move(erased.theta1);
  out.theta_star = std::move(recovered.theta_star);
  return out;
}

std::uint64_t hash_params(const ParameterVector& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    h = fnv1a(p.name.data(), p.name.size(), h);
    const std::uint64_t th = hash_tensor(p.value);
    h = fnv1a(&th, sizeof th, h);
  }
  return h;
}

namespace {

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void write_record_json(const UnlearnRecord& record, const std::filesystem::path& path) {
  const UnlearnConfig& c = record.config;
  ordered_json config;
  config["eta_high"] = c.eta_high;
  config["eta_low"] = c.eta_low;
  config["erasure_epochs"] = c.erasure_epochs;
  config["recovery_epochs"] = c.recovery_epochs;
  config["batch_size"] = c.batch_size;
  config["weight_decay"] = c.weight_decay;
  config["clip"] = c.clip_norm ? ordered_json(*c.clip_norm) : ordered_json(nullptr);
  config["clip_mode"] = clip_mode_name(c.clip_mode);
  config["oes_count"] = c.oes_count;
  config["erasure_data"] = erasure_data_name(c.erasure_data);
  config["seed"] = c.seed;

  ordered_json j;
  j["config"] = config;
  j["theta0_hash"] = hex(record.theta0_hash);
  j["theta1_hash"] = hex(hash_params(record.theta1));
  j["theta_star_hash"] = hex(hash_params(record.theta_star));
  j["oes_count"] = record.oes_count;
  j["oes_hash"] = hex(record.oes_hash);
  j["erasure_losses"] = record.erasure_losses;
  j["recovery_losses"] = record.recovery_losses;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace gfoes
