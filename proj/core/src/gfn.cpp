#include "gfoes/gfn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>

#include "gfoes/rng.hpp"

namespace gfoes {

void GfnConfig::validate() const {
  if (!(eta_gfn >= 0.0) || !(eta_phi >= 0.0) || !(eta_lambda >= 0.0)) {
    throw ConfigError("gfn: rates must be non-negative");
  }
  if (!(delta > 0.0 && delta < 0.5)) throw ConfigError("gfn: delta must lie in (0, 0.5)");
  if (!(lambda0 >= delta && lambda0 <= 1.0 - delta)) {
    throw ConfigError("gfn: lambda0 must lie in [delta, 1 - delta]");
  }
  if (epochs == 0 || iterations_per_epoch == 0) throw ConfigError("gfn: need at least one iteration");
  if (batch_size == 0) throw ConfigError("gfn: batch_size must be positive");
  if (!(eps_guard > 0.0)) throw ConfigError("gfn: eps_guard must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("gfn: weight_decay must be non-negative");
  if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("gfn: clip_norm must be positive");
}

OptimStep GfnConfig::generator_step() const {
  return OptimStep{eta_phi, weight_decay, clip_norm, clip_mode};
}

GfnTerms gfn_terms(Tape& tape, std::span<const Var> phi, const Generator& gen,
                   const ClassifierModel& theta0, const LabeledDataset& retain_subset,
                   std::span<const int> forgotten, const Tensor& z, double eta_gfn,
                   double eps_guard, bool create_graph) {
  if (retain_subset.empty()) throw EmptyInputError("gfn: retained subset is empty");
  const std::size_t layers = theta0.feature_layers();
  GfnTerms out;
  out.generated = generator_forward(phi, gen.center(), gen.half_width(), tape.constant(z));
  const auto fake_labels =
      std::make_shared<const std::vector<int>>(round_robin_labels(forgotten, z.rows()));

  std::vector<Var> theta;
  for (const auto& p : theta0.params()) theta.push_back(tape.variable(p.value));

  const Var logits_fake = classifier_forward(theta, layers, out.generated).logits;
  out.l_max = clamp_min(cross_entropy(logits_fake, fake_labels), eps_guard);

  auto union_labels = std::make_shared<std::vector<int>>(*fake_labels);
  union_labels->insert(union_labels->end(), retain_subset.labels.begin(),
                       retain_subset.labels.end());
  const Var retained_inputs = tape.constant(retain_subset.inputs);
  const Var union_inputs = concat_rows(out.generated, retained_inputs);
  const Var inner_loss = cross_entropy(classifier_forward(theta, layers, union_inputs).logits,
                                       std::shared_ptr<const std::vector<int>>(union_labels));
  const std::vector<Var> g = grad(inner_loss, theta, create_graph);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    out.theta_prime.push_back(theta[i] - scale(g[i], eta_gfn));
  }
  out.l_min = cross_entropy(classifier_forward(out.theta_prime, layers, retained_inputs).logits,
                            retain_subset.labels);
  return out;
}

double loss_max(const Generator& gen, const ClassifierModel& theta0, std::span<const int> forgotten,
                const Tensor& z, double eps_guard) {
  const Tensor x = generator_forward(gen, z);
  const Tensor logits = classifier_forward(theta0, x).logits;
  Tape tape;
  const auto labels = round_robin_labels(forgotten, z.rows());
  return std::max(cross_entropy(tape.constant(logits), labels).value().item(), eps_guard);
}

ClassifierModel inner_update(const ClassifierModel& theta0, const LabeledDataset& generated,
                             const LabeledDataset& retain_subset, double eta_gfn) {
  const LabeledDataset all = concat(generated, retain_subset);
  if (all.empty()) throw EmptyInputError("inner_update: no samples");
  Tape tape;
  const auto theta = tape.bind(theta0.params());
  const Var loss = cross_entropy(
      classifier_forward(theta, theta0.feature_layers(), tape.constant(all.inputs)).logits,
      all.labels);
  const GradientMap g = backward(loss);
  ClassifierModel out = theta0;
  for (std::size_t i = 0; i < out.params().size(); ++i) {
    auto p = out.params()[i].value.values();
    auto gv = g[i].value.values();
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= eta_gfn * gv[k];
  }
  return out;
}

double loss_min(const ClassifierModel& theta_prime, const LabeledDataset& retain_subset) {
  if (retain_subset.empty()) throw EmptyInputError("loss_min: retained subset is empty");
  Tape tape;
  const Tensor logits = classifier_forward(theta_prime, retain_subset.inputs).logits;
  return cross_entropy(tape.constant(logits), retain_subset.labels).value().item();
}

double gfn_objective(double l_max, double l_min, double lambda, double eps_guard) {
  return lambda / std::max(l_max, eps_guard) + (1.0 - lambda) * l_min;
}

double lambda_step(double lambda, double l_max, double l_min, double eta_lambda, double delta) {
  return std::clamp(lambda + eta_lambda * (1.0 / l_max - l_min), delta, 1.0 - delta);
}

ModelSpec generator_spec(const ModelSpec& classifier, const LabeledDataset& retain_subset) {
  ModelSpec spec = classifier;
  std::tie(spec.data_lower, spec.data_upper) = data_range(retain_subset, 0.10);
  return spec;
}

GfnResult train_gfn(const ClassifierModel& theta0, const LabeledDataset& retain_subset,
                    std::span<const int> forgotten, const GfnConfig& cfg) {
  cfg.validate();
  if (retain_subset.empty()) throw EmptyInputError("train_gfn: retained subset is empty");
  if (forgotten.empty()) throw InvalidSplitError("train_gfn: no forgotten labels");
  note_read("train_gfn", retain_subset);

  const ModelSpec spec = generator_spec(theta0.spec(), retain_subset);
  Generator gen = init_generator(spec, derive_seed(cfg.seed, "generator-init"));
  Rng noise_rng(derive_seed(cfg.seed, "generator-noise"));
  const OptimStep step = cfg.generator_step();

  GfnTrace trace;
  trace.delta = cfg.delta;
  trace.eps_guard = cfg.eps_guard;
  double lambda = cfg.lambda0;

  for (std::size_t t = 1; t <= cfg.iterations(); ++t) {
    const Tensor z = standard_normal(noise_rng, cfg.batch_size, spec.z_dim);
    Tape tape;
    const auto phi = tape.bind(gen.params());
    GfnTerms terms;
    try {
      terms = gfn_terms(tape, phi, gen, theta0, retain_subset, forgotten, z, cfg.eta_gfn,
                        cfg.eps_guard, !cfg.first_order);
    } catch (const NumericError& e) {
      throw GfnAborted("train_gfn: iteration " + std::to_string(t) + ": " + e.what(), t, trace);
    }
    const double l_max = terms.l_max.value().item();
    const double l_min = terms.l_min.value().item();
    const Var j = scale(reciprocal(terms.l_max), lambda) + scale(terms.l_min, 1.0 - lambda);

    GfnRecord rec;
    rec.t = t;
    rec.lambda = lambda;
    rec.l_max = l_max;
    rec.l_min = l_min;
    rec.j = j.value().item();
    rec.grad_lambda_norm = std::abs(1.0 / l_max - l_min);
    if (!std::isfinite(rec.j) || !std::isfinite(l_min) || !std::isfinite(l_max)) {
      throw GfnAborted("train_gfn: non-finite objective at iteration " + std::to_string(t), t,
                       trace);
    }

    GradientMap g = backward(j);
    rec.grad_phi_norm = global_norm(g);
    trace.records.push_back(rec);
    try {
      if (cfg.eta_phi != 0.0) gen.params() = sgd_step(gen.params(), g, step);
    } catch (const NumericError& e) {
      throw GfnAborted("train_gfn: iteration " + std::to_string(t) + ": " + e.what(), t, trace);
    }
    lambda = lambda_step(lambda, l_max, l_min, cfg.eta_lambda, cfg.delta);
  }
  return {std::move(gen), std::move(trace)};
}

LabeledDataset generate_oes(const Generator& gen, std::size_t count, std::span<const int> forgotten,
                            std::size_t num_classes, std::uint64_t seed) {
  if (count == 0) throw EmptyInputError("generate_oes: count must be positive");
  Rng rng(seed);
  const Tensor z = standard_normal(rng, count, gen.spec().z_dim);
  LabeledDataset out;
  out.inputs = generator_forward(gen, z);
  out.labels = round_robin_labels(forgotten, count);
  out.num_classes = num_classes;
  return out;
}

ConvergenceReport convergence_report(const GfnTrace& trace) {
  if (trace.records.empty()) throw EmptyInputError("convergence_report: empty trace");
  ConvergenceReport r;
  double sup_l_max = 0.0;
  for (const auto& rec : trace.records) sup_l_max = std::max(sup_l_max, rec.l_max);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& rec : trace.records) {
    const double v = rec.grad_phi_norm * rec.grad_phi_norm + rec.grad_lambda_norm * rec.grad_lambda_norm;
    best = std::min(best, v);
    if (!r.running_min.empty() && best > r.running_min.back()) r.running_min_non_increasing = false;
    r.running_min.push_back(best);
    if (!(rec.j > 0.0) || rec.j < rec.lambda / sup_l_max) r.lower_bound_holds = false;
    if (rec.l_max < trace.eps_guard) r.positivity_holds = false;
    if (rec.lambda < trace.delta || rec.lambda > 1.0 - trace.delta) r.lambda_in_range = false;
  }
  r.initial_gap = trace.records.front().grad_lambda_norm;
  r.final_gap = trace.records.back().grad_lambda_norm;
  return r;
}

void write_trace_csv(const GfnTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[256];
  out << "t,lambda,l_max,l_min,j,grad_phi_norm,grad_lambda_norm\n";
  for (const auto& r : trace.records) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.t, r.lambda,
                  r.l_max, r.l_min, r.j, r.grad_phi_norm, r.grad_lambda_norm);
    out << buf;
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace gfoes
