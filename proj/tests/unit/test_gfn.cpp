#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "gfoes/gfn.hpp"
#include "gfoes/rng.hpp"
#include "gfoes/train.hpp"
#include "support/oracles.hpp"

using namespace gfoes;
using gfoes::testing::naive_cross_entropy;
using gfoes::testing::random_matrix;
using gfoes::testing::relative_error;

namespace {

// Tiny problem: 3 classes in 2-d, small networks so finite differences over
// every generator parameter stay cheap.
struct Tiny {
  ModelSpec spec;
  ClassifierModel theta0;
  LabeledDataset retain;
  Generator gen;
  Tensor z;
  std::vector<int> forgotten = {0};
};

Tiny tiny(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tiny t;
  t.spec.input_dim = 2;
  t.spec.hidden = {4};
  t.spec.num_classes = 3;
  t.spec.z_dim = 2;
  t.spec.generator_hidden = {3};
  t.spec.seed = seed;
  t.theta0 = init_model(t.spec);
  for (auto& p : t.theta0.params()) p.value = random_matrix(rng, p.value.rows(), p.value.cols());
  t.retain.inputs = random_matrix(rng, 6, 2, -2.0, 2.0);
  t.retain.labels = {1, 2, 1, 2, 1, 2};
  t.retain.num_classes = 3;
  t.gen = init_generator(generator_spec(t.spec, t.retain), seed + 100);
  for (auto& p : t.gen.params()) p.value = random_matrix(rng, p.value.rows(), p.value.cols());
  t.z = random_matrix(rng, 4, 2, -1.5, 1.5);
  return t;
}

Generator with_params(const Generator& g, const ParameterVector& p) {
  return Generator(g.spec(), p);
}

LabeledDataset labelled(const Tensor& x, const std::vector<int>& forgotten, std::size_t k) {
  LabeledDataset d;
  d.inputs = x;
  d.labels = round_robin_labels(forgotten, x.rows());
  d.num_classes = k;
  return d;
}

// L_max and L_min recomputed through the value-level API only.
std::pair<double, double> value_terms(const Tiny& t, const ParameterVector& phi, double eta) {
  const Generator g = with_params(t.gen, phi);
  const double l_max = loss_max(g, t.theta0, t.forgotten, t.z);
  const LabeledDataset fake = labelled(generator_forward(g, t.z), t.forgotten, 3);
  const double l_min = loss_min(inner_update(t.theta0, fake, t.retain, eta), t.retain);
  return {l_max, l_min};
}

}  // namespace

TEST_CASE("L_max of a uniform classifier is ln K") {
  Tiny t = tiny(1);
  for (double& v : t.theta0.params().at("head.weight").values()) v = 0.0;
  for (double& v : t.theta0.params().at("head.bias").values()) v = 0.0;
  CHECK(loss_max(t.gen, t.theta0, t.forgotten, t.z) == doctest::Approx(std::log(3.0)));
}

TEST_CASE("L_max is floored at eps_guard") {
  Tiny t = tiny(2);
  for (double& v : t.theta0.params().at("head.weight").values()) v = 0.0;
  t.theta0.params().at("head.bias")(0, 0) = 50.0;
  CHECK(loss_max(t.gen, t.theta0, t.forgotten, t.z, 1e-6) == 1e-6);
}

TEST_CASE("L_max matches an explicit composition") {
  const Tiny t = tiny(3);
  const Tensor x = generator_forward(t.gen, t.z);
  const Tensor logits = classifier_forward(t.theta0, x).logits;
  double expected = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    expected += naive_cross_entropy({r.begin(), r.end()}, 0);
  }
  expected /= static_cast<double>(logits.rows());
  CHECK(loss_max(t.gen, t.theta0, t.forgotten, t.z) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("inner update with zero rate is the identity") {
  const Tiny t = tiny(4);
  const LabeledDataset fake = labelled(generator_forward(t.gen, t.z), t.forgotten, 3);
  CHECK(inner_update(t.theta0, fake, t.retain, 0.0).params() == t.theta0.params());
}

TEST_CASE("one differentiable gradient step on a quadratic") {
  const double c = 2.5;
  Tape tape;
  const Var theta = tape.variable(Tensor::scalar(0.0));
  const Var diff = add_scalar(theta, -c);
  const Var loss = scale(diff * diff, 0.5);
  const Var g = grad(loss, std::span<const Var>(&theta, 1), true)[0];
  const Var updated = theta - scale(g, 0.1);
  CHECK(updated.value().item() == doctest::Approx(0.1 * c).epsilon(1e-15));
  // d theta' / d theta = 1 - eta
  CHECK(grad(updated, std::span<const Var>(&theta, 1))[0].value().item() ==
        doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("L_min of a uniform model is ln K and equals the cross-entropy") {
  Tiny t = tiny(5);
  ClassifierModel flat = t.theta0;
  for (double& v : flat.params().at("head.weight").values()) v = 0.0;
  for (double& v : flat.params().at("head.bias").values()) v = 0.0;
  CHECK(loss_min(flat, t.retain) == doctest::Approx(std::log(3.0)));

  const Tensor logits = classifier_forward(t.theta0, t.retain.inputs).logits;
  double expected = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    expected += naive_cross_entropy({r.begin(), r.end()}, t.retain.labels[i]);
  }
  CHECK(loss_min(t.theta0, t.retain) ==
        doctest::Approx(expected / static_cast<double>(logits.rows())).epsilon(1e-12));
}

TEST_CASE("L_min of a converged model on its own training data is small") {
  BlobSpec bs;
  bs.num_classes = 3;
  bs.dim = 4;
  bs.per_class = 10;
  bs.seed = 6;
  const LabeledDataset d = make_blobs(bs);
  ModelSpec ms;
  ms.input_dim = 4;
  ms.hidden = {16};
  ms.num_classes = 3;
  ms.seed = 6;
  ClassifierModel m = init_model(ms);
  TrainConfig cfg;
  cfg.step = OptimStep{0.05, 0.0, std::nullopt};
  cfg.epochs = 300;
  cfg.batch_size = 30;
  fit(m, d, cfg);
  CHECK(loss_min(m, d) < 0.01);
}

TEST_CASE("gfn_terms agree with the value-level API") {
  const Tiny t = tiny(7);
  Tape tape;
  const auto phi = tape.bind(t.gen.params());
  const GfnTerms terms = gfn_terms(tape, phi, t.gen, t.theta0, t.retain, t.forgotten, t.z, 0.3,
                                   1e-6, true);
  const auto [l_max, l_min] = value_terms(t, t.gen.params(), 0.3);
  CHECK(terms.l_max.value().item() == doctest::Approx(l_max).epsilon(1e-12));
  CHECK(terms.l_min.value().item() == doctest::Approx(l_min).epsilon(1e-12));
}

TEST_CASE("dL_min/dphi through the unrolled step matches finite differences") {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    const Tiny t = tiny(seed);
    Tape tape;
    const auto phi = tape.bind(t.gen.params());
    const GfnTerms terms = gfn_terms(tape, phi, t.gen, t.theta0, t.retain, t.forgotten, t.z, 0.3,
                                     1e-6, true);
    const GradientMap analytic = backward(terms.l_min);
    const GradientMap numeric = finite_diff_grad(
        [&](const ParameterVector& p) { return value_terms(t, p, 0.3).second; }, t.gen.params(),
        1e-6);
    CAPTURE(seed);
    CHECK(relative_error(analytic, numeric) < 1e-3);
  }
}

TEST_CASE("dJ/dphi follows the reciprocal-gradient identity") {
  const Tiny t = tiny(20);
  const double lambda = 0.3;
  Tape tape;
  const auto phi = tape.bind(t.gen.params());
  const GfnTerms terms = gfn_terms(tape, phi, t.gen, t.theta0, t.retain, t.forgotten, t.z, 0.3,
                                   1e-6, true);
  const Var j = scale(reciprocal(terms.l_max), lambda) + scale(terms.l_min, 1.0 - lambda);
  const GradientMap gj = backward(j);

  const GradientMap numeric = finite_diff_grad(
      [&](const ParameterVector& p) {
        const auto [l_max, l_min] = value_terms(t, p, 0.3);
        return gfn_objective(l_max, l_min, lambda);
      },
      t.gen.params(), 1e-6);
  CHECK(relative_error(gj, numeric) < 1e-3);

  Tape a;
  const GradientMap g_max = backward(
      gfn_terms(a, a.bind(t.gen.params()), t.gen, t.theta0, t.retain, t.forgotten, t.z, 0.3, 1e-6,
                true)
          .l_max);
  Tape b;
  const GradientMap g_min = backward(
      gfn_terms(b, b.bind(t.gen.params()), t.gen, t.theta0, t.retain, t.forgotten, t.z, 0.3, 1e-6,
                true)
          .l_min);
  const double l_max = terms.l_max.value().item();
  GradientMap combined = g_max;
  for (std::size_t i = 0; i < combined.size(); ++i) {
    auto c = combined[i].value.values();
    auto m = g_min[i].value.values();
    for (std::size_t k = 0; k < c.size(); ++k) {
      c[k] = -(lambda / (l_max * l_max)) * c[k] + (1.0 - lambda) * m[k];
    }
  }
  CHECK(relative_error(gj, combined) < 1e-12);
}

TEST_CASE("first-order mode drops the path through the inner step") {
  const Tiny t = tiny(21);
  Tape a;
  const GradientMap second = backward(gfn_terms(a, a.bind(t.gen.params()), t.gen, t.theta0,
                                                t.retain, t.forgotten, t.z, 0.3, 1e-6, true)
                                          .l_min);
  Tape b;
  const GradientMap first = backward(gfn_terms(b, b.bind(t.gen.params()), t.gen, t.theta0,
                                               t.retain, t.forgotten, t.z, 0.3, 1e-6, false)
                                         .l_min);
  CHECK(global_norm(second) > 0.0);
  CHECK(global_norm(first) == 0.0);
}

TEST_CASE("objective arithmetic") {
  CHECK(gfn_objective(1.0, 1.0, 0.5) == 1.0);
  CHECK(gfn_objective(4.0, 2.0, 0.25) == doctest::Approx(1.5625).epsilon(1e-15));
  CHECK(gfn_objective(0.0, 0.0, 0.5, 1e-6) == doctest::Approx(0.5e6));
}

TEST_CASE("lambda step") {
  CHECK(lambda_step(0.37, 2.0, 0.5, 0.1) == 0.37);
  CHECK(lambda_step(0.5, 1.0, 0.0, 0.1) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(lambda_step(0.999, 1.0, 0.0, 0.1, 1e-3) == 0.999);
  CHECK(lambda_step(0.001, 0.1, 50.0, 0.1, 1e-3) == 0.001);
}

TEST_CASE("train_gfn with a frozen generator") {
  const Tiny t = tiny(30);
  GfnConfig cfg;
  cfg.epochs = 1;
  cfg.eta_phi = 0.0;
  cfg.batch_size = 4;
  cfg.seed = 31;
  const GfnResult r = train_gfn(t.theta0, t.retain, t.forgotten, cfg);
  CHECK(r.trace.records.size() == 1);
  const Generator fresh =
      init_generator(generator_spec(t.theta0.spec(), t.retain), derive_seed(31, "generator-init"));
  CHECK(r.generator.params() == fresh.params());
}

TEST_CASE("train_gfn traces satisfy the invariants and are deterministic") {
  const Tiny t = tiny(32);
  GfnConfig cfg;
  cfg.epochs = 10;
  cfg.iterations_per_epoch = 2;
  cfg.batch_size = 8;
  cfg.eta_phi = 0.05;
  cfg.eta_lambda = 0.5;
  cfg.seed = 33;
  const GfnResult a = train_gfn(t.theta0, t.retain, t.forgotten, cfg);
  REQUIRE(a.trace.records.size() == 20);
  for (std::size_t i = 0; i < 20; ++i) CHECK(a.trace.records[i].t == i + 1);
  const ConvergenceReport rep = convergence_report(a.trace);
  CHECK(rep.lambda_in_range);
  CHECK(rep.positivity_holds);
  CHECK(rep.lower_bound_holds);
  CHECK(rep.running_min_non_increasing);

  const GfnResult b = train_gfn(t.theta0, t.retain, t.forgotten, cfg);
  CHECK(a.generator.params() == b.generator.params());
  CHECK(a.trace.records.back().j == b.trace.records.back().j);
}

TEST_CASE("train_gfn aborts on non-finite losses and keeps the partial trace") {
  Tiny t = tiny(34);
  t.theta0.params().at("head.bias")(0, 1) = std::numeric_limits<double>::quiet_NaN();
  GfnConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  try {
    train_gfn(t.theta0, t.retain, t.forgotten, cfg);
    FAIL("expected GfnAborted");
  } catch (const GfnAborted& e) {
    CHECK(e.iteration() == 1);
    CHECK(e.trace().records.empty());
  }
}

TEST_CASE("convergence report running minimum") {
  GfnTrace constant;
  for (std::size_t t = 1; t <= 5; ++t) constant.records.push_back({t, 0.5, 2.0, 0.5, 0.5, 0.3, 0.4});
  const ConvergenceReport c = convergence_report(constant);
  for (double v : c.running_min) CHECK(v == doctest::Approx(0.25));

  GfnTrace noisy;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (std::size_t t = 1; t <= 50; ++t) noisy.records.push_back({t, 0.5, 1.0, 1.0, 1.0, u(rng), u(rng)});
  const ConvergenceReport n = convergence_report(noisy);
  CHECK(n.running_min_non_increasing);
  for (std::size_t i = 1; i < n.running_min.size(); ++i) CHECK(n.running_min[i] <= n.running_min[i - 1]);
}

TEST_CASE("convergence report flags violated invariants") {
  GfnTrace bad;
  bad.records.push_back({1, 0.9995, 1e-9, 0.1, -1.0, 0.1, 0.1});
  const ConvergenceReport r = convergence_report(bad);
  CHECK_FALSE(r.lambda_in_range);
  CHECK_FALSE(r.positivity_holds);
  CHECK_FALSE(r.lower_bound_holds);
}

TEST_CASE("trace csv layout") {
  GfnTrace tr;
  tr.records.push_back({1, 0.5, 2.0, 0.25, 0.375, 0.1, 0.25});
  const auto path = std::filesystem::temp_directory_path() / "gfoes_test_trace.csv";
  write_trace_csv(tr, path);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "t,lambda,l_max,l_min,j,grad_phi_norm,grad_lambda_norm");
  CHECK(row == "1,0.5,2,0.25,0.375,0.10000000000000001,0.25");
  std::filesystem::remove(path);
}

TEST_CASE("generated erasure samples are labelled round robin") {
  const Tiny t = tiny(40);
  const std::vector<int> yf = {0, 2};
  const LabeledDataset oes = generate_oes(t.gen, 5, yf, 3, 41);
  CHECK(oes.labels == std::vector<int>{0, 2, 0, 2, 0});
  CHECK(generate_oes(t.gen, 5, yf, 3, 41).inputs == oes.inputs);
}
