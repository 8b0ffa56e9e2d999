#pragma once

#include <cstddef>
#include <functional>

#include "awml/numcore/param_set.hpp"

namespace awml::num {

using ScalarFn = std::function<double(const ParamSet&)>;

// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for every coordinate.
// Throws ValidationError naming the coordinate if a probe is non-finite.
ParamSet finite_diff_grad(const ScalarFn& f, const ParamSet& params, double h);

struct GradComparison {
  double max_rel_error = 0.0;
  std::size_t entry = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Relative error |a - n| / max(|a|, |n|, floor), maximised over coordinates.
GradComparison compare_gradients(const ParamSet& analytic, const ParamSet& numeric,
                                 double floor = 1e-6);

// Floor for compare_gradients that scales with the loss value: central
// differences at h = 1e-5 carry round-off of roughly 1e-11 * |f|, so
// coordinates far below 1e-6 * |f| cannot be resolved.
double gradient_floor(double loss_value);

}  // namespace awml::num
