#include "cora/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cora/errors.hpp"

namespace cora {

GradCheckResult grad_check(const ScalarFunction& f, std::vector<Tensor2> params, double step) {
  if (!(step >= 1e-6 && step <= 1e-3)) {
    throw DomainError("grad_check: step " + std::to_string(step) + " outside [1e-6, 1e-3]");
  }
  std::vector<Tensor2> analytic;
  const double f0 = f(params, &analytic);
  if (!std::isfinite(f0)) throw NumericError("grad_check: non-finite value at base point");
  if (analytic.size() != params.size()) {
    throw DimensionError("grad_check: function returned " + std::to_string(analytic.size()) +
                         " gradients for " + std::to_string(params.size()) + " parameters");
  }

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double saved = params[k][i];
      params[k][i] = saved + step;
      const double up = f(params, nullptr);
      params[k][i] = saved - step;
      const double down = f(params, nullptr);
      params[k][i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: non-finite value probing parameter " + std::to_string(k) +
                           " element " + std::to_string(i));
      }
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k].empty() ? 0.0 : analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_relative_error) {
        result = {rel, k, i, a, numeric};
      }
    }
  }
  return result;
}

}  // namespace cora
