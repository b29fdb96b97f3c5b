#include "storyplan/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "storyplan/rng.hpp"

namespace storyplan::nn {

Linear Linear::create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  Linear l;
  l.weight = &params.create(name + ".weight", in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  l.bias = &params.create(name + ".bias", 1, out);
  return l;
}

Var Linear::forward(Graph& g, Var x) const {
  return add_row(g, matmul(g, x, g.parameter(*weight)), g.parameter(*bias));
}

ConvGlu ConvGlu::create(ParameterSet& params, const std::string& name, std::size_t channels_in,
                        std::size_t channels_out, std::size_t width, bool causal, Rng& rng) {
  if (!causal && width % 2 == 0) throw std::invalid_argument("encoder convolution width must be odd");
  ConvGlu c;
  c.width = width;
  c.causal = causal;
  const double fan_in = static_cast<double>(width * channels_in);
  c.weight = &params.create(name + ".weight", width * channels_in, 2 * channels_out, 1.0 / std::sqrt(fan_in), rng);
  c.bias = &params.create(name + ".bias", 1, 2 * channels_out);
  return c;
}

Var ConvGlu::forward(Graph& g, Var x) const {
  const std::size_t c_in = g.value(x).cols();
  if (c_in * width != weight->value.rows()) {
    throw std::invalid_argument("conv1d_glu: input has " + std::to_string(c_in) + " channels, weights expect " +
                                std::to_string(weight->value.rows() / width));
  }
  const std::size_t c_out = weight->value.cols() / 2;
  Var h = add_row(g, matmul(g, im2col(g, x, width, causal), g.parameter(*weight)), g.parameter(*bias));
  Var out = mul(g, slice_cols(g, h, 0, c_out), sigmoid(g, slice_cols(g, h, c_out, c_out)));
  if (c_out == c_in) out = add(g, out, x);
  return out;
}

AttentionResult attention(Graph& g, Var queries, Var keys, Var values, const AttentionMask& mask) {
  const double d = static_cast<double>(g.value(queries).cols());
  Var scores = scale(g, matmul_nt(g, queries, keys), 1.0 / std::sqrt(d));
  Var w = masked_softmax(g, scores, mask);
  const std::size_t m = g.value(keys).rows();
  // The null column multiplies a zero value vector, so it drops out here.
  Var out = matmul(g, slice_cols(g, w, 0, m), values);
  return {out, w};
}

GatedSelfAttention GatedSelfAttention::create(ParameterSet& params, const std::string& name, std::size_t dim,
                                              std::size_t heads, Rng& rng) {
  if (heads == 0 || dim % heads != 0) throw std::invalid_argument("head count must divide the model dimension");
  GatedSelfAttention a;
  a.heads = heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  a.wq = &params.create(name + ".wq", dim, dim, s, rng);
  a.wk = &params.create(name + ".wk", dim, dim, s, rng);
  a.wv = &params.create(name + ".wv", dim, dim, s, rng);
  a.wo = &params.create(name + ".wo", dim, dim, s, rng);
  a.gate_weight = &params.create(name + ".gate.weight", dim, dim, s, rng);
  a.gate_bias = &params.create(name + ".gate.bias", 1, dim);
  return a;
}

GatedSelfAttention::Result GatedSelfAttention::forward(Graph& g, Var states,
                                                       const std::vector<AttentionMask>& head_masks) const {
  const std::size_t dim = g.value(states).cols();
  if (heads == 0 || dim % heads != 0) throw std::invalid_argument("head count must divide the model dimension");
  if (head_masks.size() != heads) throw std::invalid_argument("need one attention mask per head");
  const std::size_t hd = dim / heads;
  Var q = matmul(g, states, g.parameter(*wq));
  Var k = matmul(g, states, g.parameter(*wk));
  Var v = matmul(g, states, g.parameter(*wv));
  Result r;
  std::vector<Var> outputs;
  for (std::size_t h = 0; h < heads; ++h) {
    auto res = attention(g, slice_cols(g, q, h * hd, hd), slice_cols(g, k, h * hd, hd), slice_cols(g, v, h * hd, hd),
                         head_masks[h]);
    outputs.push_back(res.output);
    r.head_weights.push_back(res.weights);
  }
  Var projected = matmul(g, heads == 1 ? outputs[0] : concat_cols(g, outputs), g.parameter(*wo));
  Var gate = sigmoid(g, add_row(g, matmul(g, states, g.parameter(*gate_weight)), g.parameter(*gate_bias)));
  r.output = mul(g, projected, gate);
  return r;
}

Var copy_probability(Graph& g, Var states, Var copy_weight) { return sigmoid(g, matmul(g, states, copy_weight)); }

}  // namespace storyplan::nn
