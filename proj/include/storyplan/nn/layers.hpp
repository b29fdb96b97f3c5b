#pragma once

#include <string>
#include <vector>

#include "storyplan/nn/graph.hpp"
#include "storyplan/nn/tensor.hpp"

namespace storyplan::nn {

/// y = x W + b
struct Linear {
  Parameter* weight = nullptr;  // (in, out)
  Parameter* bias = nullptr;    // (1, out)

  static Linear create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Var forward(Graph& g, Var x) const;
};

/// 1D convolution to 2c channels split into (a, b); output a * sigmoid(b),
/// plus the input as a residual when channel counts agree.
struct ConvGlu {
  Parameter* weight = nullptr;  // (width * in, 2 * out)
  Parameter* bias = nullptr;    // (1, 2 * out)
  std::size_t width = 1;
  bool causal = false;

  static ConvGlu create(ParameterSet& params, const std::string& name, std::size_t channels_in,
                        std::size_t channels_out, std::size_t width, bool causal, Rng& rng);
  /// Throws std::invalid_argument when x's channels do not match the weights.
  Var forward(Graph& g, Var x) const;
};

struct AttentionResult {
  Var output;   // (queries, value dim)
  Var weights;  // (queries, keys + 1); last column is the null slot
};

/// Scaled dot-product attention. The null slot is an extra key with score 0
/// and a zero value vector.
AttentionResult attention(Graph& g, Var queries, Var keys, Var values, const AttentionMask& mask);

/// Multi-head self-attention whose projected output is multiplied by a
/// learned sigmoid gate computed from the input states.
struct GatedSelfAttention {
  Parameter* wq = nullptr;
  Parameter* wk = nullptr;
  Parameter* wv = nullptr;
  Parameter* wo = nullptr;
  Parameter* gate_weight = nullptr;
  Parameter* gate_bias = nullptr;
  std::size_t heads = 1;

  static GatedSelfAttention create(ParameterSet& params, const std::string& name, std::size_t dim, std::size_t heads,
                                   Rng& rng);

  struct Result {
    Var output;
    std::vector<Var> head_weights;
  };
  /// One mask per head. Throws std::invalid_argument if heads does not divide dim.
  Result forward(Graph& g, Var states, const std::vector<AttentionMask>& head_masks) const;
};

/// sigma(w . h) for each row of h; w is (dim, 1).
Var copy_probability(Graph& g, Var states, Var copy_weight);

}  // namespace storyplan::nn
