#include "gfoes/train.hpp"

#include <algorithm>
#include <numeric>

#include "gfoes/error.hpp"
#include "gfoes/rng.hpp"

namespace gfoes {

void TrainConfig::validate() const {
  if (step.learning_rate != 0.0) step.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
}

LossAndGrad loss_and_grad(const ClassifierModel& model, const LabeledDataset& batch) {
  if (batch.empty()) throw EmptyInputError("loss_and_grad: empty batch");
  Tape tape;
  const auto params = tape.bind(model.params());
  const Var logits =
      classifier_forward(params, model.feature_layers(), tape.constant(batch.inputs)).logits;
  const Var loss = cross_entropy(logits, batch.labels);
  return {loss.value().item(), backward(loss)};
}

double dataset_loss(const ClassifierModel& model, const LabeledDataset& data) {
  if (data.empty()) throw EmptyInputError("dataset_loss: empty dataset");
  Tape tape;
  RecordingScope off(tape, false);
  const auto logits = classifier_forward(model, data.inputs).logits;
  return cross_entropy(tape.constant(logits), data.labels).value().item();
}

std::vector<double> fit(ClassifierModel& model, const LabeledDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<double> losses;
  if (cfg.epochs == 0) return losses;
  if (data.empty()) throw EmptyInputError("fit: empty training set");
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const LabeledDataset batch =
          data.subset(std::span<const std::size_t>(order).subspan(begin, end - begin));
      LossAndGrad lg = loss_and_grad(model, batch);
      if (cfg.ascend)
        for (auto& g : lg.grad)
          for (double& v : g.value.values()) v = -v;
      losses.push_back(lg.loss);
      if (cfg.step.learning_rate != 0.0) model.params() = sgd_step(model.params(), lg.grad, cfg.step);
    }
  }
  return losses;
}

TrainConfig original_protocol(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.step = OptimStep{4e-4, 1e-4, 0.1, ClipMode::Value};
  cfg.epochs = 20;
  cfg.batch_size = 32;
  cfg.seed = seed;
  return cfg;
}

}  // namespace gfoes
