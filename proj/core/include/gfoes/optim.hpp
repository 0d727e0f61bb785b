#pragma once

#include <functional>
#include <optional>
#include <string_view>

#include "gfoes/params.hpp"

namespace gfoes {

enum class ClipMode {
  Norm,   // rescale all gradients when their global L2 norm exceeds the threshold
  Value,  // clamp each gradient entry to [-threshold, threshold]
};

const char* clip_mode_name(ClipMode mode) noexcept;
ClipMode parse_clip_mode(std::string_view name);

/// Hyperparameters of one plain SGD update.
struct OptimStep {
  double learning_rate = 4e-4;
  double weight_decay = 1e-4;
  /// Clipping threshold; absent disables clipping.
  std::optional<double> clip_norm = 0.1;
  ClipMode clip_mode = ClipMode::Norm;

  void validate() const;
};

/// param <- param - lr * (clip(grad) + weight_decay * param).
///
/// In Norm mode, clipping rescales every gradient by clip_norm / g when the
/// global norm g of all gradients exceeds clip_norm; in Value mode each entry
/// is clamped. Decay is coupled (added to the gradient after clipping).
ParameterVector sgd_step(const ParameterVector& params, const GradientMap& grads,
                         const OptimStep& step);

/// The gradients sgd_step actually applies before decay: a copy of `grads`,
/// rescaled when clipping is active.
GradientMap clipped(const GradientMap& grads, std::optional<double> clip_norm,
                    ClipMode mode = ClipMode::Norm);

using Objective = std::function<double(const ParameterVector&)>;

/// Central differences (f(p + eps) - f(p - eps)) / (2 eps), one coordinate at a time.
/// Requires eps in [1e-6, 1e-3].
GradientMap finite_diff_grad(const Objective& objective, const ParameterVector& params,
                             double epsilon);

}  // namespace gfoes
