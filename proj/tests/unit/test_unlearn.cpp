#include <doctest.h>

#include <random>

#include "gfoes/eval.hpp"
#include "gfoes/experiment.hpp"
#include "gfoes/rng.hpp"
#include "support/oracles.hpp"

using namespace gfoes;
using gfoes::testing::random_matrix;
using gfoes::testing::relative_error;

namespace {

struct Small {
  ClassifierModel theta0;
  LabeledDataset retain;
  LabeledDataset oes;
  std::vector<int> forgotten = {0};
};

Small small(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelSpec spec;
  spec.input_dim = 3;
  spec.hidden = {5};
  spec.num_classes = 3;
  spec.seed = seed;
  Small s;
  s.theta0 = init_model(spec);
  s.retain.inputs = random_matrix(rng, 8, 3, -2.0, 2.0);
  s.retain.labels = {1, 2, 1, 2, 1, 2, 1, 2};
  s.retain.num_classes = 3;
  s.oes.inputs = random_matrix(rng, 6, 3, -2.0, 2.0);
  s.oes.labels = std::vector<int>(6, 0);
  s.oes.num_classes = 3;
  return s;
}

UnlearnConfig one_step(double eta_high, double eta_low) {
  UnlearnConfig c;
  c.eta_high = eta_high;
  c.eta_low = eta_low;
  c.batch_size = 64;
  c.seed = 5;
  return c;
}

// Default blob task, trained once for every empirical case below.
struct Blob {
  ExperimentConfig cfg = default_config();
  Task task;
  UnlearnResult result;
  Blob() : task(prepare_task(cfg)) {
    result = gfoes_unlearn(task.theta0, task.split.retain_subset, task.split.forgotten,
                           cfg.gfn_config(), cfg.unlearn_config());
  }
  ForgetRetain report(const ClassifierModel& m) const {
    const auto& s = task.split;
    return forget_retain_report(m, s.test_forget, s.test_retain, s.forgotten);
  }
};

const Blob& blob() {
  static const Blob b;
  return b;
}

}  // namespace

TEST_CASE("zero erasure rate leaves theta0 untouched") {
  const Small s = small(1);
  const ErasureResult e = erasure_phase(s.theta0, s.oes, s.retain, s.forgotten, one_step(0.0, 0.1));
  CHECK(e.theta1.params() == s.theta0.params());
  CHECK(e.losses.size() == 1);
}

TEST_CASE("zero recovery rate returns theta1") {
  const Small s = small(2);
  const RecoveryResult r = recovery_phase(s.theta0, s.retain, s.forgotten, one_step(0.1, 0.0));
  CHECK(r.theta_star.params() == s.theta0.params());
}

TEST_CASE("one full-batch erasure step is one sgd step on OES and D_rs") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Small s = small(seed);
    for (ErasureData data : {ErasureData::OesAndRetained, ErasureData::OesOnly, ErasureData::RetainedOnly}) {
      UnlearnConfig c = one_step(0.05, 0.0);
      c.erasure_data = data;
      const LabeledDataset oes = data == ErasureData::RetainedOnly ? LabeledDataset{} : s.oes;
      LabeledDataset expected_set = s.retain;
      if (data == ErasureData::OesAndRetained) expected_set = concat(s.oes, s.retain);
      if (data == ErasureData::OesOnly) expected_set = s.oes;
      const ErasureResult e = erasure_phase(s.theta0, oes, s.retain, s.forgotten, c);
      const ParameterVector expected = sgd_step(
          s.theta0.params(), loss_and_grad(s.theta0, expected_set).grad, c.erasure_training().step);
      CHECK(relative_error(e.theta1.params(), expected) < 1e-12);
    }
  }
}

TEST_CASE("one full-batch recovery step is one sgd step on D_rs") {
  const Small s = small(7);
  const UnlearnConfig c = one_step(0.0, 0.05);
  const RecoveryResult r = recovery_phase(s.theta0, s.retain, s.forgotten, c);
  const ParameterVector expected =
      sgd_step(s.theta0.params(), loss_and_grad(s.theta0, s.retain).grad, c.recovery_training().step);
  CHECK(relative_error(r.theta_star.params(), expected) < 1e-12);
}

TEST_CASE("forgotten labels in D_rs are a zero-glance violation") {
  Small s = small(3);
  s.retain.labels[4] = 0;
  CHECK_THROWS_AS(erasure_phase(s.theta0, s.oes, s.retain, s.forgotten, one_step(0.1, 0.1)),
                  ZeroGlanceViolation);
  CHECK_THROWS_AS(recovery_phase(s.theta0, s.retain, s.forgotten, one_step(0.1, 0.1)),
                  ZeroGlanceViolation);
}

TEST_CASE("empty erasure set is rejected unless only D_rs is used") {
  const Small s = small(4);
  CHECK_THROWS_AS(erasure_phase(s.theta0, LabeledDataset{}, s.retain, s.forgotten, one_step(0.1, 0.1)),
                  EmptyInputError);
}

TEST_CASE("negative rates are a config error, equal and zero rates are not") {
  CHECK_THROWS_AS(one_step(-1.0, 0.1).validate(), ConfigError);
  CHECK_THROWS_AS(one_step(0.1, -1.0).validate(), ConfigError);
  CHECK_NOTHROW(one_step(0.1, 0.1).validate());
  CHECK_NOTHROW(one_step(0.0, 0.0).validate());
}

TEST_CASE("default OES count is the D_rs class size times |Y_f|") {
  LabeledDataset d;
  d.labels = {1, 1, 1, 2, 2, 2};
  d.inputs = Tensor::zeros(6, 2);
  d.num_classes = 3;
  CHECK(default_oes_count(d, 1) == 3);
  CHECK(default_oes_count(d, 2) == 6);
}

TEST_CASE("erasure drives forgotten-class accuracy below chance") {
  const Blob& b = blob();
  const double chance = 1.0 / static_cast<double>(b.cfg.data.num_classes);
  CHECK(b.report(b.task.theta0).ad_f > 0.9);
  CHECK(b.report(b.result.theta1).ad_f < chance);
}

TEST_CASE("recovery keeps the forgetting and restores retention") {
  const Blob& b = blob();
  const ForgetRetain erased = b.report(b.result.theta1);
  const ForgetRetain recovered = b.report(b.result.theta_star);
  CHECK(recovered.ad_f <= erased.ad_f + 0.02);
  CHECK(recovered.ad_r >= erased.ad_r);
  CHECK(recovered.ad_f <= 0.02);
  CHECK(recovered.ad_r >= b.report(b.task.theta0).ad_r - 0.05);
}

TEST_CASE("unlearning is deterministic and its record is consistent") {
  const Blob& b = blob();
  const UnlearnResult again = gfoes_unlearn(b.task.theta0, b.task.split.retain_subset,
                                            b.task.split.forgotten, b.cfg.gfn_config(),
                                            b.cfg.unlearn_config());
  CHECK(again.theta_star.params() == b.result.theta_star.params());
  const UnlearnRecord& r = b.result.record;
  CHECK(r.theta0_hash == hash_params(b.task.theta0.params()));
  CHECK(r.theta_star == b.result.theta_star.params());
  CHECK(r.oes_count == default_oes_count(b.task.split.retain_subset, 1));
  CHECK(r.oes_hash == again.record.oes_hash);
  CHECK(r.recovery_losses.size() > 0);

  // The OES snapshot is reproducible from the saved generator and seed.
  const LabeledDataset oes = generate_oes(*b.result.generator, r.oes_count, b.task.split.forgotten,
                                          b.cfg.data.num_classes, r.config.oes_seed());
  const ErasureResult e = erasure_phase(b.task.theta0, oes, b.task.split.retain_subset,
                                        b.task.split.forgotten, r.config);
  CHECK(e.theta1.params() == r.theta1);
}

TEST_CASE("unlearning reads only D_rs") {
  const Blob& b = blob();
  AccessLog log;
  {
    ScopedAccessLog scope(log);
    gfoes_unlearn(b.task.theta0, b.task.split.retain_subset, b.task.split.forgotten,
                  b.cfg.gfn_config(), b.cfg.unlearn_config());
  }
  CHECK_FALSE(log.records().empty());
  CHECK(log.violations(row_hashes(b.task.split.forget)) == 0);
  CHECK(log.violations(row_hashes(b.task.split.test_forget)) == 0);
}
