#pragma once

#include <vector>

#include "storyplan/nn/tensor.hpp"

namespace storyplan::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
};

/// Adam with bias correction. Moment buffers follow the ParameterSet order.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(ParameterSet& params);
  std::size_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace storyplan::nn
