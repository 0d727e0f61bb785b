#pragma once

// Two-phase fine-tuning: an erasure pass over synthetic erasure samples mixed
// with the retained subset at a high rate, then a recovery pass over the
// retained subset alone at a low rate.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "gfoes/data.hpp"
#include "gfoes/gfn.hpp"
#include "gfoes/models.hpp"
#include "gfoes/train.hpp"

namespace gfoes {

/// What the erasure phase trains on.
enum class ErasureData {
  OesAndRetained,  // OES mixed with D_rs
  OesOnly,
  RetainedOnly,  // D_rs alone; no generator is trained
};

const char* erasure_data_name(ErasureData data) noexcept;
ErasureData parse_erasure_data(std::string_view name);

struct UnlearnConfig {
  double eta_high = 4e-3;
  double eta_low = 4e-4;
  std::size_t erasure_epochs = 1;
  std::size_t recovery_epochs = 1;
  std::size_t batch_size = 32;
  double weight_decay = 1e-4;
  std::optional<double> clip_norm = 0.1;
  ClipMode clip_mode = ClipMode::Value;
  /// Number of erasure samples; 0 means (per-class size of D_rs) x |Y_f|.
  std::size_t oes_count = 0;
  ErasureData erasure_data = ErasureData::OesAndRetained;
  std::uint64_t seed = 0;

  /// Rates must be non-negative; equal or zero rates are allowed for ablations.
  void validate() const;
  TrainConfig erasure_training() const;
  TrainConfig recovery_training() const;
  std::uint64_t oes_seed() const;
};

/// (per-class size of D_rs) x |Y_f|, with the per-class size taken as the
/// largest retained-class count.
std::size_t default_oes_count(const LabeledDataset& retain_subset, std::size_t forgotten_count);

struct ErasureResult {
  ClassifierModel theta1;
  LabeledDataset oes;  // empty for ErasureData::RetainedOnly
  std::vector<double> losses;
};

/// Generates the OES snapshot from `gen` and fine-tunes theta0 on it (and on
/// D_rs, per cfg.erasure_data) at eta_high.
ErasureResult erasure_phase(const ClassifierModel& theta0, const Generator& gen,
                            const LabeledDataset& retain_subset, std::span<const int> forgotten,
                            const UnlearnConfig& cfg);

/// Erasure on an already materialized erasure sample set (which may be empty
/// only for ErasureData::RetainedOnly).
ErasureResult erasure_phase(const ClassifierModel& theta0, const LabeledDataset& oes,
                            const LabeledDataset& retain_subset, std::span<const int> forgotten,
                            const UnlearnConfig& cfg);

struct RecoveryResult {
  ClassifierModel theta_star;
  std::vector<double> losses;
};

/// Fine-tunes theta1 on D_rs alone at eta_low. Throws ZeroGlanceViolation if
/// D_rs carries a forgotten label.
RecoveryResult recovery_phase(const ClassifierModel& theta1, const LabeledDataset& retain_subset,
                              std::span<const int> forgotten, const UnlearnConfig& cfg);

struct UnlearnRecord {
  std::uint64_t theta0_hash = 0;
  ParameterVector theta1;
  ParameterVector theta_star;
  std::vector<double> erasure_losses;
  std::vector<double> recovery_losses;
  UnlearnConfig config;
  std::size_t oes_count = 0;
  std::uint64_t oes_hash = 0;  // 0 when no OES were used
};

struct UnlearnResult {
  ClassifierModel theta_star;
  UnlearnRecord record;
  GfnTrace trace;  // empty for ErasureData::RetainedOnly
  std::optional<Generator> generator;
  ClassifierModel theta1;
};

UnlearnResult gfoes_unlearn(const ClassifierModel& theta0, const LabeledDataset& retain_subset,
                            std::span<const int> forgotten, const GfnConfig& gfn_cfg,
                            const UnlearnConfig& cfg);

std::uint64_t hash_params(const ParameterVector& params);

/// Config, hashes and per-phase losses as JSON.
void write_record_json(const UnlearnRecord& record, const std::filesystem::path& path);

}  // namespace gfoes
