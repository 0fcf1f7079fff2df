#include "cora/optim.hpp"

#include <cmath>
#include <string>

#include "cora/errors.hpp"

namespace cora {

Adam::Adam(AdamConfig config, std::span<const Tensor2> params) : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.emplace_back(p.rows(), p.cols());
    v_.emplace_back(p.rows(), p.cols());
  }
}

void Adam::step(std::span<Tensor2> params, std::span<const Tensor2> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw DimensionError("Adam::step: expected " + std::to_string(m_.size()) + " tensors, got " +
                         std::to_string(params.size()) + " params and " +
                         std::to_string(grads.size()) + " grads");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].same_shape(m_[k])) {
      throw DimensionError("Adam::step: parameter " + std::to_string(k) + " is " +
                           params[k].shape_string() + ", state is " + m_[k].shape_string());
    }
    if (!grads[k].empty() && !grads[k].same_shape(m_[k])) {
      throw DimensionError("Adam::step: gradient " + std::to_string(k) + " is " +
                           grads[k].shape_string() + ", parameter is " + m_[k].shape_string());
    }
  }

  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor2& p = params[k];
    Tensor2& m = m_[k];
    Tensor2& v = v_[k];
    const bool has_grad = !grads[k].empty();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = has_grad ? grads[k][i] : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    require_finite(p, "Adam::step");
  }
}

}  // namespace cora
