#include "storyplan/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace storyplan::nn {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const LossFn& loss, const std::vector<Tensor>& inputs) {
  Graph g;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.constant(t));
  return g.value(loss(g, leaves))[0];
}

}  // namespace

GradCheckResult grad_check(const LossFn& loss, std::vector<Tensor>& inputs, std::span<Parameter* const> params,
                           double eps) {
  for (Parameter* p : params) p->zero_grad();
  Graph g;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.input(t));
  g.backward(loss(g, leaves));

  GradCheckResult result;
  const auto probe = [&](double& slot, double analytic) {
    const double saved = slot;
    slot = saved + eps;
    const double up = evaluate(loss, inputs);
    slot = saved - eps;
    const double down = evaluate(loss, inputs);
    slot = saved;
    const double numeric = (up - down) / (2.0 * eps);
    result.max_relative_error = std::max(result.max_relative_error, relative_error(analytic, numeric));
    ++result.coordinates;
  };

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = g.grad(leaves[i]);
    for (std::size_t j = 0; j < inputs[i].size(); ++j) probe(inputs[i][j], analytic[j]);
  }
  for (Parameter* p : params) {
    const Tensor analytic = p->grad;
    for (std::size_t j = 0; j < p->value.size(); ++j) probe(p->value[j], analytic[j]);
  }
  for (Parameter* p : params) p->zero_grad();
  return result;
}

}  // namespace storyplan::nn
