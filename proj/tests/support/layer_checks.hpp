#pragma once

#include <string>
#include <vector>

#include "storyplan/nn/gradcheck.hpp"
#include "storyplan/nn/layers.hpp"
#include "storyplan/rng.hpp"

namespace storyplan::testing {

struct LayerCheck {
  std::string layer;
  nn::GradCheckResult result;
};

inline nn::Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  nn::Tensor t(rows, cols);
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

/// Central-difference checks of every layer, each reduced to a scalar by a
/// fixed random projection so no gradient is trivially uniform.
inline std::vector<LayerCheck> run_layer_checks(std::uint64_t seed = 7) {
  using namespace nn;
  Rng rng(seed);
  std::vector<LayerCheck> out;

  const auto project = [](Graph& g, Var x, const Tensor& w) { return sum(g, mul(g, x, g.constant(w))); };

  {
    ParameterSet ps;
    auto& table = ps.create("table", 7, 4, 0.5, rng);
    Parameter* params[] = {&table};
    const std::vector<int> ids = {3, 0, 3, 6, 1};
    const Tensor w = random_tensor(ids.size(), 4, rng);
    std::vector<Tensor> inputs;
    out.push_back({"embedding", grad_check([&](Graph& g, std::span<const Var>) {
                     return project(g, embedding(g, g.parameter(table), ids), w);
                   }, inputs, params)});
  }
  for (bool causal : {false, true}) {
    ParameterSet ps;
    const ConvGlu conv = ConvGlu::create(ps, "conv", 4, 4, 3, causal, rng);
    Parameter* params[] = {conv.weight, conv.bias};
    const Tensor w = random_tensor(5, 4, rng);
    std::vector<Tensor> inputs = {random_tensor(5, 4, rng)};
    out.push_back({causal ? "glu conv (causal)" : "glu conv",
                   grad_check([&](Graph& g, std::span<const Var> in) { return project(g, conv.forward(g, in[0]), w); },
                              inputs, params)});
  }
  {
    AttentionMask mask(4, 5);
    for (std::size_t q = 0; q < 4; ++q) {
      mask.set_null(q, true);
      for (std::size_t k = 0; k <= q + 1 && k < 5; ++k) mask.set(q, k, (q + k) % 3 != 1);
    }
    const Tensor w_out = random_tensor(4, 3, rng);
    const Tensor w_weights = random_tensor(4, 6, rng);
    std::vector<Tensor> inputs = {random_tensor(4, 3, rng), random_tensor(5, 3, rng), random_tensor(5, 3, rng)};
    ParameterSet none;
    out.push_back({"attention", grad_check([&](Graph& g, std::span<const Var> in) {
                     const auto r = attention(g, in[0], in[1], in[2], mask);
                     return add(g, project(g, r.output, w_out), project(g, r.weights, w_weights));
                   }, inputs, {})});
  }
  {
    ParameterSet ps;
    const GatedSelfAttention attn = GatedSelfAttention::create(ps, "mhsa", 4, 2, rng);
    std::vector<Parameter*> params;
    for (std::size_t i = 0; i < ps.size(); ++i) params.push_back(&ps[i]);
    AttentionMask verb(5, 5);
    for (std::size_t q = 0; q < 5; ++q) {
      verb.set_null(q, true);
      if (q >= 2) verb.set(q, 1, true);
    }
    const std::vector<AttentionMask> masks = {AttentionMask::causal(5), verb};
    const Tensor w = random_tensor(5, 4, rng);
    std::vector<Tensor> inputs = {random_tensor(5, 4, rng)};
    out.push_back({"gated multi-head self-attention",
                   grad_check([&](Graph& g, std::span<const Var> in) { return project(g, attn.forward(g, in[0], masks).output, w); },
                              inputs, params)});
  }
  {
    ParameterSet ps;
    const Linear lin = Linear::create(ps, "lin", 4, 3, rng);
    Parameter* params[] = {lin.weight, lin.bias};
    const Tensor w = random_tensor(5, 3, rng);
    std::vector<Tensor> inputs = {random_tensor(5, 4, rng)};
    out.push_back({"linear", grad_check([&](Graph& g, std::span<const Var> in) { return project(g, lin.forward(g, in[0]), w); },
                                        inputs, params)});
  }
  {
    const std::vector<int> targets = {2, 0, 5, -1, 4};
    std::vector<Tensor> inputs = {random_tensor(5, 6, rng, 2.0)};
    out.push_back({"softmax + cross-entropy",
                   grad_check([&](Graph& g, std::span<const Var> in) { return cross_entropy(g, in[0], targets, -1); },
                              inputs, {})});
  }
  {
    ParameterSet ps;
    auto& copy_weight = ps.create("copy", 4, 1, 0.5, rng);
    Parameter* params[] = {&copy_weight};
    const std::vector<double> targets = {1, 0, 1, 0, 1};
    const std::vector<double> weights = {1, 1, 0, 1, 1};
    const Tensor w = random_tensor(5, 1, rng);
    std::vector<Tensor> inputs = {random_tensor(5, 4, rng)};
    out.push_back({"pointer-copy classifier", grad_check([&](Graph& g, std::span<const Var> in) {
                     Var cw = g.parameter(copy_weight);
                     Var logits = matmul(g, in[0], cw);
                     return add(g, bce_with_logits(g, logits, targets, weights),
                                project(g, copy_probability(g, in[0], cw), w));
                   }, inputs, params)});
  }
  {
    std::vector<Tensor> inputs = {random_tensor(4, 5, rng)};
    AttentionMask mask = AttentionMask::causal(4);
    const std::vector<std::size_t> rows = {1, 3};
    const std::vector<std::vector<std::size_t>> cols = {{0}, {1, 2}};
    out.push_back({"pointer attention mass", grad_check([&](Graph& g, std::span<const Var> in) {
                     Var w = masked_softmax(g, slice_cols(g, in[0], 0, 4), mask);
                     return neg_log_mass(g, w, rows, cols);
                   }, inputs, {})});
  }
  return out;
}

}  // namespace storyplan::testing
