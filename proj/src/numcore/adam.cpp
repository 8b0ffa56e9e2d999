#include "awml/numcore/adam.hpp"

#include <cmath>

#include "awml/common/error.hpp"

namespace awml::num {

AdamState::AdamState(const ParamSet& schema, AdamConfig config)
    : config_(config), m_(schema.zeros_like()), v_(schema.zeros_like()) {
  if (!(config.lr > 0.0) || !(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 >= 0.0 && config.beta2 < 1.0) || !(config.eps > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
}

void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads) {
  params.require_same_schema(state.m_, "adam_step state");
  params.require_same_schema(grads, "adam_step gradients");
  const auto& c = state.config_;
  ++state.t_;
  const double t = static_cast<double>(state.t_);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t e = 0; e < params.size(); ++e) {
    double* p = params.tensor(e).data();
    double* m = state.m_.tensor(e).data();
    double* v = state.v_.tensor(e).data();
    const double* g = grads.tensor(e).data();
    const std::size_t n = params.tensor(e).size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      p[i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
    }
  }
}

}  // namespace awml::num
