#pragma once

// Experiment runner: config loading, the blob task, full runs, the ablation
// grid and the round-trip audit. Everything scientific written to disk is a
// deterministic function of the config and master seed; timestamps go to
// meta.json only.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gfoes/baselines.hpp"
#include "gfoes/data.hpp"
#include "gfoes/eval.hpp"
#include "gfoes/gfn.hpp"
#include "gfoes/models.hpp"
#include "gfoes/train.hpp"
#include "gfoes/unlearn.hpp"

namespace gfoes {

/// One ablation cell: erasure data plus an (erasure, recovery) rate pair.
struct AblationCell {
  std::string name;
  ErasureData data = ErasureData::OesAndRetained;
  double eta_high = 4e-3;
  double eta_low = 4e-4;

  void validate() const;
};

/// The nine cells OES+D_r / OES / D_r crossed with R_ls (4e-3, 4e-4),
/// R_l (4e-3, 4e-3) and R_s (4e-4, 4e-4).
std::vector<AblationCell> default_ablation_cells();

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "runs/blobs";
  /// Multiplies every unlearning-stage rate: eta_phi, eta_high, eta_low and the
  /// baseline fine-tuning rates. The original model, retrain and eta_gfn are unscaled.
  double rate_scale = 100.0;
  /// "gfoes" and/or baseline method names.
  std::vector<std::string> methods = {"gfoes", "retrain", "neggrad", "random_label",
                                      "noise_impair_repair"};

  BlobSpec data;
  SplitSpec split;
  ModelSpec model;
  TrainConfig original;
  GfnConfig gfn;
  UnlearnConfig unlearn;
  BaselineConfig baselines;
  std::vector<AblationCell> ablation = default_ablation_cells();

  /// Throws ConfigError naming the offending field.
  void validate() const;

  // Effective per-stage configs: rate_scale applied, seeds derived from the master seed.
  BlobSpec data_spec() const;
  SplitSpec split_spec() const;
  ModelSpec model_spec() const;
  TrainConfig original_training() const;
  GfnConfig gfn_config() const;
  UnlearnConfig unlearn_config() const;
  UnlearnConfig cell_config(const AblationCell& cell) const;
  BaselineConfig baseline_config(BaselineMethod method) const;
};

/// Desk-scale blob task: K=5, d=16, 625 samples/class (500 train after the
/// 20% holdout), separation 80 at noise 10, forget class 0, e = 0.10.
ExperimentConfig default_config();

/// Reads the nested key/value format (YAML) or JSON. Unknown keys and bad
/// values raise ConfigError with the line and field.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<string>");

/// Resolved config as JSON (output_dir excluded so outputs do not depend on it).
std::string config_json(const ExperimentConfig& cfg);

struct Task {
  LabeledDataset data;
  DatasetSplit split;
  ClassifierModel theta0;
  std::vector<double> train_losses;
};

/// Generates the data, splits it and trains theta0.
Task prepare_task(const ExperimentConfig& cfg);

struct MethodOutcome {
  std::string method;
  ClassifierModel model;
  MetricsReport metrics;
  std::optional<UnlearnResult> gfoes;  // set for "gfoes"
};

struct ZeroGlanceReport {
  std::size_t forbidden_rows = 0;  // |D_f| + |T_f|
  std::size_t violations = 0;      // forbidden rows read outside "evaluate"
  std::vector<std::string> consumers;
};

struct RunResult {
  Task task;
  MetricsReport original;
  std::vector<MethodOutcome> methods;
  ZeroGlanceReport audit;

  const MethodOutcome* find(std::string_view method) const;
};

struct CellOutcome {
  AblationCell cell;
  ForgetRetain result;
};

/// Runs the enabled methods. With `out`, writes the artifact bundle there.
RunResult run_experiment(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out);

/// Runs every ablation cell against one shared theta0 and writes ablation.csv.
std::vector<CellOutcome> run_ablation(const ExperimentConfig& cfg, const Task& task,
                                      const std::optional<std::filesystem::path>& out);

/// Writes only the task artifacts (config, data, split, theta0 and its metrics).
void write_task(const ExperimentConfig& cfg, const Task& task, const std::filesystem::path& out);

/// Reloads the config, data, split and theta0 written by write_task.
struct SavedRun {
  ExperimentConfig config;
  Task task;
};
SavedRun load_run(const std::filesystem::path& dir);

/// Recomputes every number in run.json from the persisted data, split and
/// models. Returns one line per mismatch; empty means the bundle is consistent.
std::vector<std::string> audit_run(const std::filesystem::path& dir);

}  // namespace gfoes
