#include "awml/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "awml/common/error.hpp"

namespace awml::num {

ParamSet finite_diff_grad(const ScalarFn& f, const ParamSet& params, double h) {
  ParamSet probe = params;
  ParamSet out = params.zeros_like();
  for (std::size_t e = 0; e < probe.size(); ++e) {
    Tensor& t = probe.tensor(e);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + h;
      const double up = f(probe);
      t[i] = saved - h;
      const double down = f(probe);
      t[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw ValidationError("finite_diff_grad: non-finite probe at " + probe.entry(e).name + "[" +
                              std::to_string(i) + "]");
      }
      out.tensor(e)[i] = (up - down) / (2.0 * h);
    }
  }
  return out;
}

GradComparison compare_gradients(const ParamSet& analytic, const ParamSet& numeric, double floor) {
  analytic.require_same_schema(numeric, "compare_gradients");
  GradComparison worst;
  for (std::size_t e = 0; e < analytic.size(); ++e) {
    const Tensor& a = analytic.tensor(e);
    const Tensor& n = numeric.tensor(e);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double denom = std::max({std::abs(a[i]), std::abs(n[i]), floor});
      const double rel = std::abs(a[i] - n[i]) / denom;
      if (rel > worst.max_rel_error || (e == 0 && i == 0)) {
        worst = {rel, e, i, a[i], n[i]};
      }
    }
  }
  return worst;
}

double gradient_floor(double loss_value) { return 1e-6 * std::max(1.0, std::abs(loss_value)); }

}  // namespace awml::num
