#pragma once

// Mini-batch SGD over a labelled dataset, shared by the original-model
// protocol, both unlearning phases and the baselines.

#include <cstdint>
#include <vector>

#include "gfoes/data.hpp"
#include "gfoes/models.hpp"
#include "gfoes/optim.hpp"

namespace gfoes {

struct TrainConfig {
  OptimStep step;  // a zero learning rate leaves the model untouched
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  /// Seeds the per-epoch shuffles.
  std::uint64_t seed = 0;
  /// Ascend the loss instead of descending it (the update uses negated gradients).
  bool ascend = false;

  void validate() const;
};

/// Mean cross-entropy of `params` (a classifier layout) on `batch`, with its gradient.
struct LossAndGrad {
  double loss = 0.0;
  GradientMap grad;
};
LossAndGrad loss_and_grad(const ClassifierModel& model, const LabeledDataset& batch);

/// Mean cross-entropy without a gradient.
double dataset_loss(const ClassifierModel& model, const LabeledDataset& data);

/// Runs cfg.epochs passes over `data` in shuffled mini-batches (the last batch
/// may be short) and updates model.params() in place. Returns the loss of
/// every mini-batch, measured before its update.
std::vector<double> fit(ClassifierModel& model, const LabeledDataset& data, const TrainConfig& cfg);

/// The original-model protocol: 20 epochs, batch 32, lr 4e-4, wd 1e-4,
/// gradient entries clipped to 0.1.
TrainConfig original_protocol(std::uint64_t seed);

}  // namespace gfoes
