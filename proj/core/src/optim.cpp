#include "gfoes/optim.hpp"

#include <algorithm>
#include <cmath>

#include "gfoes/error.hpp"

namespace gfoes {

const char* clip_mode_name(ClipMode mode) noexcept {
  return mode == ClipMode::Value ? "value" : "norm";
}

ClipMode parse_clip_mode(std::string_view name) {
  if (name == "norm") return ClipMode::Norm;
  if (name == "value") return ClipMode::Value;
  throw ConfigError("unknown clip mode '" + std::string(name) + "' (expected norm or value)");
}

void OptimStep::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
}

GradientMap clipped(const GradientMap& grads, std::optional<double> clip_norm, ClipMode mode) {
  GradientMap out = grads;
  if (!clip_norm) return out;
  if (mode == ClipMode::Value) {
    for (auto& g : out)
      for (double& v : g.value.values()) v = std::clamp(v, -*clip_norm, *clip_norm);
    return out;
  }
  const double norm = global_norm(grads);
  if (norm > *clip_norm) {
    const double factor = *clip_norm / norm;
    for (auto& g : out)
      for (double& v : g.value.values()) v *= factor;
  }
  return out;
}

ParameterVector sgd_step(const ParameterVector& params, const GradientMap& grads,
                         const OptimStep& step) {
  step.validate();
  if (!params.same_layout(grads)) {
    throw ShapeError("sgd_step: gradients do not match the parameter layout");
  }
  const GradientMap applied = clipped(grads, step.clip_norm, step.clip_mode);
  ParameterVector out = params;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto p = out[i].value.values();
    auto g = applied[i].value.values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] -= step.learning_rate * (g[k] + step.weight_decay * p[k]);
    }
    require_finite(out[i].value, "sgd_step");
  }
  return out;
}

GradientMap finite_diff_grad(const Objective& objective, const ParameterVector& params,
                             double epsilon) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-3)) {
    throw ConfigError("finite_diff_grad: epsilon must lie in [1e-6, 1e-3]");
  }
  auto evaluate = [&](const ParameterVector& p) {
    const double v = objective(p);
    if (!std::isfinite(v)) throw NumericError("finite_diff_grad: objective is not finite");
    return v;
  };

  GradientMap out;
  ParameterVector probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor g = params[i].value;
    auto gv = g.values();
    auto pv = probe[i].value.values();
    for (std::size_t k = 0; k < pv.size(); ++k) {
      const double original = pv[k];
      pv[k] = original + epsilon;
      const double plus = evaluate(probe);
      pv[k] = original - epsilon;
      const double minus = evaluate(probe);
      pv[k] = original;
      gv[k] = (plus - minus) / (2.0 * epsilon);
    }
    out.add(params[i].name, std::move(g));
  }
  return out;
}

}  // namespace gfoes
