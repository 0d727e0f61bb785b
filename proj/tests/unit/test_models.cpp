#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "gfoes/error.hpp"
#include "gfoes/models.hpp"
#include "gfoes/optim.hpp"
#include "support/oracles.hpp"

using namespace gfoes;
using gfoes::testing::naive_dense;
using gfoes::testing::random_matrix;
using gfoes::testing::relative_error;

namespace {

ModelSpec small_spec(std::uint64_t seed = 7) {
  ModelSpec s;
  s.input_dim = 4;
  s.hidden = {6, 5};
  s.num_classes = 3;
  s.z_dim = 3;
  s.generator_hidden = {4};
  s.data_lower = {-1.0, 0.0, 2.0, -5.0};
  s.data_upper = {1.0, 4.0, 3.0, 5.0};
  s.seed = seed;
  return s;
}

void zero_all(ParameterVector& p) {
  for (auto& t : p)
    for (double& v : t.value.values()) v = 0.0;
}

}  // namespace

TEST_CASE("init_model is deterministic in the seed") {
  const ModelSpec spec = small_spec();
  CHECK(init_model(spec).params() == init_model(spec).params());
  CHECK_FALSE(init_model(spec).params() == init_model(small_spec(8)).params());
}

TEST_CASE("parameter count of a one-hidden-layer classifier") {
  ModelSpec spec;
  spec.hidden = {32};
  CHECK(init_model(spec).params().scalar_count() == 16 * 32 + 32 + 32 * 5 + 5);
}

TEST_CASE("glorot weights are centred and bounded") {
  ModelSpec spec;
  spec.input_dim = 128;
  spec.hidden = {128};
  spec.seed = 11;
  const ClassifierModel m = init_model(spec);
  const Tensor& w = m.params().at("features.0.weight");
  const double n = static_cast<double>(w.size());
  REQUIRE(n >= 1e4);
  const double a = std::sqrt(6.0 / 256.0);
  double mean = 0.0;
  for (double v : w.values()) {
    CHECK(std::abs(v) <= a);
    mean += v;
  }
  mean /= n;
  CHECK(std::abs(mean) <= 3.0 * a / std::sqrt(3.0 * n));
  for (double v : m.params().at("features.0.bias").values()) CHECK(v == 0.0);
}

TEST_CASE("zero classifier gives zero logits") {
  ClassifierModel m = init_model(small_spec());
  zero_all(m.params());
  std::mt19937_64 rng(1);
  const ForwardResult out = classifier_forward(m, random_matrix(rng, 9, 4, -3.0, 3.0));
  CHECK(out.logits == Tensor::zeros(9, 3));
}

TEST_CASE("identity feature layer yields ReLU of the input") {
  ModelSpec spec = small_spec();
  spec.hidden = {4};
  ClassifierModel m = init_model(spec);
  zero_all(m.params());
  Tensor& w = m.params().at("features.0.weight");
  for (std::size_t i = 0; i < 4; ++i) w(i, i) = 1.0;
  const Tensor x = Tensor::from_rows({{-1.0, 2.0, 0.0, 3.5}, {4.0, -0.5, -2.0, 1.0}});
  CHECK(classifier_forward(m, x).features ==
        Tensor::from_rows({{0.0, 2.0, 0.0, 3.5}, {4.0, 0.0, 0.0, 1.0}}));
}

TEST_CASE("classifier logits match explicit matrix arithmetic") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    ClassifierModel m = init_model(small_spec(seed));
    for (auto& p : m.params())
      p.value = random_matrix(rng, p.value.rows(), p.value.cols());
    const Tensor x = random_matrix(rng, 7, 4, -2.0, 2.0);
    const auto& p = m.params();
    Tensor h = naive_dense(x, p[0].value, p[1].value, true);
    h = naive_dense(h, p[2].value, p[3].value, true);
    const Tensor logits = naive_dense(h, p[4].value, p[5].value, false);
    const ForwardResult out = classifier_forward(m, x);
    CHECK(relative_error(out.features, h) < 1e-14);
    CHECK(relative_error(out.logits, logits) < 1e-14);
  }
}

TEST_CASE("classifier rejects a batch of the wrong width") {
  const ClassifierModel m = init_model(small_spec());
  CHECK_THROWS_AS(classifier_forward(m, Tensor::zeros(2, 5)), ShapeError);
}

TEST_CASE("zero generator outputs the centre of the data range") {
  const ModelSpec spec = small_spec();
  Generator g = init_generator(spec, 3);
  zero_all(g.params());
  std::mt19937_64 rng(2);
  const Tensor out = generator_forward(g, random_matrix(rng, 5, 3));
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(out(i, j) == doctest::Approx(0.5 * (spec.data_lower[j] + spec.data_upper[j])));
    }
  }
}

TEST_CASE("generator outputs stay inside the data range") {
  const ModelSpec spec = small_spec();
  Generator g = init_generator(spec, 4);
  std::mt19937_64 rng(3);
  for (auto& p : g.params()) p.value = random_matrix(rng, p.value.rows(), p.value.cols(), -5.0, 5.0);
  const Tensor out = generator_forward(g, random_matrix(rng, 200, 3, -10.0, 10.0));
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(std::abs(out(i, j) - g.center()(0, j)) <= g.half_width()(0, j));
    }
  }
}

TEST_CASE("generator gradient matches finite differences") {
  const ModelSpec spec = small_spec();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    const Generator g = init_generator(spec, seed);
    const Tensor z = random_matrix(rng, 6, 3);
    const Tensor mix = random_matrix(rng, 6, 4);
    auto objective = [&](Tape& t, std::span<const Var> phi) {
      return sum(generator_forward(phi, g.center(), g.half_width(), t.constant(z)) *
                 t.constant(mix));
    };
    Tape t;
    const auto phi = t.bind(g.params());
    const GradientMap analytic = backward(objective(t, phi));
    const GradientMap numeric = finite_diff_grad(
        [&](const ParameterVector& p) {
          Tape inner;
          return objective(inner, inner.bind(p)).value().item();
        },
        g.params(), 1e-6);
    CHECK(relative_error(analytic, numeric) < 1e-6);
  }
}

TEST_CASE("param_distance by part") {
  const ClassifierModel m = init_model(small_spec());
  CHECK(param_distance(m.params(), m.params(), ModelPart::All) == 0.0);

  ParameterVector moved = m.params();
  moved.at("features.1.weight")(2, 3) += 3.0;
  CHECK(param_distance(m.params(), moved, ModelPart::FeatureExtractor) == doctest::Approx(3.0));
  CHECK(param_distance(m.params(), moved, ModelPart::Head) == 0.0);
  CHECK(param_distance(m.params(), moved, ModelPart::All) == doctest::Approx(3.0));

  ParameterVector head = m.params();
  head.at("head.bias")(0, 1) -= 3.0;
  CHECK(param_distance(m.params(), head, ModelPart::Head) == doctest::Approx(3.0));
  CHECK(param_distance(m.params(), head, ModelPart::FeatureExtractor) == 0.0);
}

TEST_CASE("param_distance equals an explicit recomputation") {
  const ClassifierModel a = init_model(small_spec(1));
  const ClassifierModel b = init_model(small_spec(2));
  const auto fa = a.params().flatten();
  const auto fb = b.params().flatten();
  double s = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) s += (fa[i] - fb[i]) * (fa[i] - fb[i]);
  CHECK(param_distance(a.params(), b.params(), ModelPart::All) ==
        doctest::Approx(std::sqrt(s)).epsilon(1e-12));
}

TEST_CASE("models round-trip through files") {
  const auto dir = std::filesystem::temp_directory_path() / "gfoes_test_models";
  std::filesystem::create_directories(dir);
  const ClassifierModel m = init_model(small_spec());
  save_model(m, dir / "m.bin");
  const ClassifierModel back = load_classifier(dir / "m.bin");
  CHECK(back.params() == m.params());
  CHECK(back.spec() == m.spec());

  const Generator g = init_generator(small_spec(), 9);
  save_model(g, dir / "g.bin");
  CHECK(load_generator(dir / "g.bin").params() == g.params());
  CHECK_THROWS_AS(load_classifier(dir / "g.bin"), IoError);
  CHECK_THROWS_AS(load_classifier(dir / "missing.bin"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("model spec validation") {
  ModelSpec s = small_spec();
  s.hidden = {};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec();
  s.num_classes = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec();
  s.data_upper[0] = s.data_lower[0];
  CHECK_THROWS_AS(s.validate(), ConfigError);
}
