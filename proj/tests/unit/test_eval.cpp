#include <doctest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "gfoes/eval.hpp"
#include "support/oracles.hpp"

using namespace gfoes;
using gfoes::testing::random_labels;
using gfoes::testing::random_matrix;

namespace {

// Classifier whose prediction is `label` everywhere.
ClassifierModel constant_model(int label, std::size_t k = 3) {
  ModelSpec spec;
  spec.input_dim = 2;
  spec.hidden = {2};
  spec.num_classes = k;
  ClassifierModel m = init_model(spec);
  for (auto& p : m.params())
    for (double& v : p.value.values()) v = 0.0;
  m.params().at("head.bias")(0, static_cast<std::size_t>(label)) = 1.0;
  return m;
}

// Identity features; logits are the first coordinates of ReLU(x).
ClassifierModel identity_model() {
  ModelSpec spec;
  spec.input_dim = 2;
  spec.hidden = {2};
  spec.num_classes = 2;
  ClassifierModel m = init_model(spec);
  for (auto& p : m.params())
    for (double& v : p.value.values()) v = 0.0;
  m.params().at("features.0.weight")(0, 0) = 1.0;
  m.params().at("features.0.weight")(1, 1) = 1.0;
  m.params().at("head.weight")(0, 0) = 1.0;
  m.params().at("head.weight")(1, 1) = 1.0;
  return m;
}

LabeledDataset dataset(Tensor x, std::vector<int> y, std::size_t k) {
  LabeledDataset d;
  d.inputs = std::move(x);
  d.labels = std::move(y);
  d.num_classes = k;
  return d;
}

}  // namespace

TEST_CASE("accuracy of a constant predictor") {
  const auto d = dataset(Tensor::zeros(4, 2), {1, 1, 0, 1}, 3);
  CHECK(accuracy(constant_model(1), d) == 0.75);
  CHECK(accuracy(constant_model(0), d) == 0.25);
}

TEST_CASE("accuracy of a perfect classifier") {
  const auto d = dataset(Tensor::from_rows({{3.0, 1.0}, {0.5, 2.0}, {4.0, 0.0}}), {0, 1, 0}, 2);
  CHECK(accuracy(identity_model(), d) == 1.0);
}

TEST_CASE("ties go to the lowest class") {
  ClassifierModel m = constant_model(0);
  m.params().at("head.bias")(0, 2) = 1.0;
  CHECK(predict(m, Tensor::zeros(3, 2)) == std::vector<int>{0, 0, 0});
}

TEST_CASE("accuracy equals a brute-force count") {
  std::mt19937_64 rng(3);
  ModelSpec spec;
  spec.input_dim = 2;
  spec.hidden = {6};
  spec.num_classes = 4;
  spec.seed = 3;
  const ClassifierModel m = init_model(spec);
  const auto d = dataset(random_matrix(rng, 200, 2, -3.0, 3.0), random_labels(rng, 200, 4), 4);
  const Tensor logits = classifier_forward(m, d.inputs).logits;
  std::size_t hits = 0;
  std::vector<std::size_t> per(4, 0), total(4, 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 4; ++k)
      if (logits(i, k) > logits(i, best)) best = k;
    const auto y = static_cast<std::size_t>(d.labels[i]);
    ++total[y];
    if (best == y) {
      ++hits;
      ++per[y];
    }
  }
  CHECK(accuracy(m, d) == doctest::Approx(hits / 200.0).epsilon(1e-15));
  const auto pc = per_class_accuracy(m, d);
  for (std::size_t k = 0; k < 4; ++k) {
    REQUIRE(pc[k].has_value());
    CHECK(*pc[k] == doctest::Approx(double(per[k]) / double(total[k])).epsilon(1e-15));
  }
}

TEST_CASE("per-class accuracy is absent for missing classes") {
  const auto d = dataset(Tensor::zeros(3, 2), {0, 0, 2}, 3);
  const auto pc = per_class_accuracy(constant_model(0), d);
  CHECK(pc[0] == 1.0);
  CHECK_FALSE(pc[1].has_value());
  CHECK(pc[2] == 0.0);
}

TEST_CASE("forget and retain accuracies") {
  const auto tf = dataset(Tensor::zeros(4, 2), {0, 0, 0, 0}, 3);
  const auto tr = dataset(Tensor::zeros(4, 2), {1, 2, 1, 2}, 3);
  const std::vector<int> forgotten = {0};
  const ForgetRetain a = forget_retain_report(constant_model(1), tf, tr, forgotten);
  CHECK(a.ad_f == 0.0);
  CHECK(a.ad_r == 0.5);
  CHECK(forget_retain_report(constant_model(0), tf, tr, forgotten).ad_f == 1.0);
  CHECK_THROWS_AS(forget_retain_report(constant_model(0), tr, tr, forgotten), InvalidSplitError);
  CHECK_THROWS_AS(forget_retain_report(constant_model(0), tf, tf, forgotten), InvalidSplitError);
}

TEST_CASE("weight distances split by part") {
  const ClassifierModel a = constant_model(0);
  CHECK(weight_distance_report(a.params(), a.params()).all == 0.0);

  ClassifierModel b = a;
  b.params().at("head.weight")(0, 1) = 3.0;
  WeightDistances d = weight_distance_report(a.params(), b.params());
  CHECK(d.feature_extractor == 0.0);
  CHECK(d.head == doctest::Approx(3.0));

  b.params().at("features.0.bias")(0, 0) = 4.0;
  d = weight_distance_report(a.params(), b.params());
  CHECK(d.feature_extractor == doctest::Approx(4.0));
  CHECK(d.all == doctest::Approx(5.0));
  CHECK(d.all * d.all == doctest::Approx(d.head * d.head + d.feature_extractor * d.feature_extractor));
}

TEST_CASE("coincident features have zero intra distance") {
  const Tensor f = Tensor::from_rows({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}});
  const std::vector<std::size_t> rows = {0, 1, 2};
  CHECK(mean_intra_distance(f, rows) == 0.0);
  const std::vector<std::size_t> one = {0};
  CHECK_THROWS_AS(mean_intra_distance(f, one), InsufficientSamplesError);
}

TEST_CASE("dispersion ratio of a constructed geometry") {
  // Class 0 sits on a ring of radius 1 around the origin; class 1 is a ring
  // of radius 1 around (10, 0). Intra = 1, centroid gap = 10.
  Tensor f = Tensor::zeros(8, 2);
  const double pts[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (std::size_t i = 0; i < 4; ++i) {
    f(i, 0) = pts[i][0];
    f(i, 1) = pts[i][1];
    f(i + 4, 0) = 10.0 + pts[i][0];
    f(i + 4, 1) = pts[i][1];
  }
  const std::vector<int> forgotten = {0};
  const RepresentationReport r =
      representation_from_features(f, {0, 0, 0, 0, 1, 1, 1, 1}, forgotten);
  REQUIRE(r.classes.size() == 2);
  const auto* c0 = r.find(0);
  CHECK(c0->forgotten);
  CHECK(c0->count == 4);
  CHECK(*c0->intra == doctest::Approx(1.0));
  CHECK(*c0->nearest_other == doctest::Approx(10.0));
  CHECK(*c0->dispersion_ratio == doctest::Approx(0.1));
  CHECK_FALSE(r.find(1)->forgotten);
  CHECK(r.find(2) == nullptr);
}

TEST_CASE("a lone class has no dispersion ratio") {
  const std::vector<int> forgotten = {};
  const RepresentationReport r =
      representation_from_features(Tensor::from_rows({{0.0}, {2.0}}), {0, 0}, forgotten);
  CHECK(*r.classes[0].intra == doctest::Approx(1.0));
  CHECK_FALSE(r.classes[0].nearest_other.has_value());
  CHECK_FALSE(r.classes[0].dispersion_ratio.has_value());
}

TEST_CASE("metrics JSON has a fixed key order and nulls for missing values") {
  MetricsReport m;
  m.logits = {0.25, 0.5};
  m.per_class = {1.0, std::nullopt};
  m.distances = WeightDistances{3.0, 4.0, 5.0};
  const std::vector<int> forgotten = {0};
  m.representation = representation_from_features(Tensor::from_rows({{0.0}, {2.0}}), {0, 0}, forgotten);
  const auto j = nlohmann::ordered_json::parse(metrics_json(m));
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  CHECK(keys == std::vector<std::string>{"ad_f", "ad_r", "per_class_accuracy", "weight_distance", "representation"});
  CHECK(j["ad_f"] == 0.25);
  CHECK(j["per_class_accuracy"][1].is_null());
  CHECK(j["weight_distance"]["all"] == 5.0);
  CHECK(j["representation"][0]["forgotten"] == true);
  CHECK(j["representation"][0]["dispersion_ratio"].is_null());
  CHECK(metrics_json(m) == metrics_json(m));
}
