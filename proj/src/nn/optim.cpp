#include "storyplan/nn/optim.hpp"

#include <cmath>

namespace storyplan::nn {

void Adam::step(ParameterSet& params) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.push_back(Tensor::zeros_like(params[i].value));
      v_.push_back(Tensor::zeros_like(params[i].value));
    }
  }
  double scale = 1.0;
  if (config_.clip_norm > 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (double gv : params[i].grad.values()) sq += gv * gv;
    }
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) scale = config_.clip_norm / norm;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].value.values();
    auto grad = params[i].grad.values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double gj = grad[j] * scale;
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gj;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj;
      value[j] -= config_.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.epsilon);
    }
  }
}

}  // namespace storyplan::nn
