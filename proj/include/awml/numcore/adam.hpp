#pragma once

#include <cstdint>

#include "awml/numcore/param_set.hpp"

namespace awml::num {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(const ParamSet& schema, AdamConfig config);

  const ParamSet& m() const { return m_; }
  const ParamSet& v() const { return v_; }
  std::uint64_t t() const { return t_; }
  const AdamConfig& config() const { return config_; }

  friend void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads);

 private:
  AdamConfig config_;
  ParamSet m_;
  ParamSet v_;
  std::uint64_t t_ = 0;
};

// Bias-corrected Adam update of params in place; increments t.
void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads);

}  // namespace awml::num
