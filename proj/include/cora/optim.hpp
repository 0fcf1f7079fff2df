#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cora/tensor.hpp"

namespace cora {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moment buffers mirror the parameter shapes
/// given at construction; every step must pass parameters in the same order.
class Adam {
 public:
  Adam(AdamConfig config, std::span<const Tensor2> params);

  /// Updates `params` in place. A missing gradient (empty tensor) counts as zero.
  void step(std::span<Tensor2> params, std::span<const Tensor2> grads);

  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor2>& first_moments() const { return m_; }
  const std::vector<Tensor2>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<Tensor2> m_;
  std::vector<Tensor2> v_;
  std::int64_t steps_ = 0;
};

}  // namespace cora
