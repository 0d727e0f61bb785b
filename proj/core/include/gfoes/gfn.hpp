#pragma once

// Generative feedback network: trains a generator whose samples, labelled
// with the forgotten classes, are misclassified by the original model while a
// one-step fine-tune on them keeps the retained-class loss low.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "gfoes/autodiff.hpp"
#include "gfoes/data.hpp"
#include "gfoes/error.hpp"
#include "gfoes/models.hpp"
#include "gfoes/optim.hpp"

namespace gfoes {

struct GfnConfig {
  double eta_gfn = 4e-3;     // inner-update rate
  double eta_phi = 4e-3;     // generator rate
  double eta_lambda = 0.01;  // trade-off rate
  double lambda0 = 0.5;
  std::size_t epochs = 20;
  std::size_t iterations_per_epoch = 1;
  std::size_t batch_size = 32;  // generated samples per iteration
  double delta = 1e-3;          // lambda stays in [delta, 1 - delta]
  double eps_guard = 1e-6;      // floor on L_max
  double weight_decay = 1e-4;
  std::optional<double> clip_norm = 0.1;
  ClipMode clip_mode = ClipMode::Value;
  /// Drop the path through the inner update when differentiating L_min.
  bool first_order = false;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t iterations() const { return epochs * iterations_per_epoch; }
  OptimStep generator_step() const;
};

struct GfnRecord {
  std::size_t t = 0;  // 1-based iteration index
  double lambda = 0.0;
  double l_max = 0.0;
  double l_min = 0.0;
  double j = 0.0;
  double grad_phi_norm = 0.0;
  double grad_lambda_norm = 0.0;  // |1/L_max - L_min|
};

struct GfnTrace {
  std::vector<GfnRecord> records;
  double delta = 1e-3;
  double eps_guard = 1e-6;
};

/// Raised when a loss turns non-finite; carries the trace up to the failure.
class GfnAborted : public NumericError {
 public:
  GfnAborted(const std::string& what, std::size_t iteration, GfnTrace trace)
      : NumericError(what), iteration_(iteration), trace_(std::move(trace)) {}
  std::size_t iteration() const noexcept { return iteration_; }
  const GfnTrace& trace() const noexcept { return trace_; }

 private:
  std::size_t iteration_;
  GfnTrace trace_;
};

// ---------------------------------------------------------------------------
// Differentiable pieces, built on a caller-owned tape.

struct GfnTerms {
  Var generated;  // G(z)
  Var l_max;      // floored at eps_guard
  Var l_min;
  std::vector<Var> theta_prime;
};

/// Builds L_max, the one-step inner update and L_min for generator parameters
/// `phi` (bound on `tape`). With create_graph the inner gradient stays
/// differentiable, so d L_min / d phi includes the path through theta'.
GfnTerms gfn_terms(Tape& tape, std::span<const Var> phi, const Generator& gen,
                   const ClassifierModel& theta0, const LabeledDataset& retain_subset,
                   std::span<const int> forgotten, const Tensor& z, double eta_gfn,
                   double eps_guard, bool create_graph);

// ---------------------------------------------------------------------------
// Value-level operations.

/// Cross-entropy of theta0 on G(z) against round-robin forgotten labels, floored at eps_guard.
double loss_max(const Generator& gen, const ClassifierModel& theta0, std::span<const int> forgotten,
                const Tensor& z, double eps_guard = 1e-6);

/// One full-batch gradient step of theta0 on `generated` followed by `retain_subset`.
ClassifierModel inner_update(const ClassifierModel& theta0, const LabeledDataset& generated,
                             const LabeledDataset& retain_subset, double eta_gfn);

double loss_min(const ClassifierModel& theta_prime, const LabeledDataset& retain_subset);

/// lambda / L_max + (1 - lambda) L_min, with L_max floored at eps_guard.
double gfn_objective(double l_max, double l_min, double lambda, double eps_guard = 1e-6);

/// clamp(lambda + eta_lambda (1/L_max - L_min), delta, 1 - delta).
double lambda_step(double lambda, double l_max, double l_min, double eta_lambda,
                   double delta = 1e-3);

/// Generator spec for a classifier: same input dimension, output range taken
/// from `retain_subset` widened by 10%.
ModelSpec generator_spec(const ModelSpec& classifier, const LabeledDataset& retain_subset);

struct GfnResult {
  Generator generator;
  GfnTrace trace;
};

GfnResult train_gfn(const ClassifierModel& theta0, const LabeledDataset& retain_subset,
                    std::span<const int> forgotten, const GfnConfig& cfg);

/// `count` samples of G(z) with z drawn from `seed`, labelled round-robin over `forgotten`.
LabeledDataset generate_oes(const Generator& gen, std::size_t count, std::span<const int> forgotten,
                            std::size_t num_classes, std::uint64_t seed);

struct ConvergenceReport {
  /// min over s <= t of (grad_phi_norm^2 + grad_lambda_norm^2), for t = 1..T.
  std::vector<double> running_min;
  bool running_min_non_increasing = true;
  /// Every J_t >= lambda_t / max_s L_max(s), and J_t > 0.
  bool lower_bound_holds = true;
  /// Every L_max >= eps_guard.
  bool positivity_holds = true;
  /// Every lambda_t in [delta, 1 - delta].
  bool lambda_in_range = true;
  double initial_gap = 0.0;  // |1/L_max - L_min| at t = 1
  double final_gap = 0.0;
};

ConvergenceReport convergence_report(const GfnTrace& trace);

void write_trace_csv(const GfnTrace& trace, const std::filesystem::path& path);

}  // namespace gfoes
