#pragma once

#include <functional>
#include <span>
#include <vector>

#include "storyplan/nn/graph.hpp"

namespace storyplan::nn {

/// Builds a scalar loss from input leaves (parameters are captured by the closure).
using LossFn = std::function<Var(Graph&, std::span<const Var>)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

/// Relative error used by grad_check: |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Compares reverse-mode gradients against central differences for every
/// coordinate of `inputs` and of `params`. Values are restored afterwards.
GradCheckResult grad_check(const LossFn& loss, std::vector<Tensor>& inputs, std::span<Parameter* const> params,
                           double eps = 1e-5);

}  // namespace storyplan::nn
