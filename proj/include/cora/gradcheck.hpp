#pragma once

#include <functional>
#include <vector>

#include "cora/tensor.hpp"

namespace cora {

/// A scalar function of a parameter list. When `grads` is non-null the
/// function must also fill it with its analytic gradient (one tensor per
/// parameter, same shapes; an empty tensor means "no gradient", read as zero).
using ScalarFunction =
    std::function<double(const std::vector<Tensor2>& params, std::vector<Tensor2>* grads)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central differences against the analytic gradient. Relative error per
/// element is |a - n| / max(|a|, |n|, 1e-8). `step` must lie in [1e-6, 1e-3].
GradCheckResult grad_check(const ScalarFunction& f, std::vector<Tensor2> params, double step);

}  // namespace cora
