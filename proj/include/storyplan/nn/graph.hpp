#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "storyplan/nn/tensor.hpp"

namespace storyplan::nn {

/// Handle to a node on a Graph.
struct Var {
  std::uint32_t id = 0;
};

/// Single-use tape. Operations append nodes in topological order; backward()
/// walks them in reverse and adds parameter gradients into Parameter::grad.
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Tensor& out_grad)>;

  /// With tracking off, parameters and inputs enter as constants and no
  /// backward closures are kept (inference).
  explicit Graph(bool track_gradients = true) : tracking_(track_gradients) {}

  Var constant(Tensor value);
  /// A leaf whose gradient is kept on the tape (used by gradient checks).
  Var input(Tensor value);
  Var parameter(Parameter& p);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient after backward(); zeros if nothing flowed into the node.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 on a 1x1 node and propagates.
  void backward(Var loss);

  // Used by operation implementations.
  Var push(Tensor value, bool requires_grad, Backward backward);
  /// Gradient buffer of v, allocated on first use; nullptr when v needs none.
  Tensor* grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  bool tracking_ = true;
};

// Differentiable operations. Shapes are (rows, cols).

Var matmul(Graph& g, Var a, Var b);
/// a * b^T
Var matmul_nt(Graph& g, Var a, Var b);
Var add(Graph& g, Var a, Var b);
/// Adds a (1, cols) row to every row of a.
Var add_row(Graph& g, Var a, Var row);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double s);
Var sigmoid(Graph& g, Var a);
Var slice_cols(Graph& g, Var a, std::size_t begin, std::size_t count);
Var concat_cols(Graph& g, std::span<const Var> parts);
/// Sum of all entries, as a 1x1 node.
Var sum(Graph& g, Var a);

/// Row gather; throws std::out_of_range on a bad index.
Var embedding(Graph& g, Var table, std::span<const int> ids);

/// Unfolds a (n, c) sequence into (n, width * c) windows. Causal windows end at
/// the current row; centered windows need an odd width. Padding is zero.
Var im2col(Graph& g, Var x, std::size_t width, bool causal);

/// Row softmax over (n, m) scores plus a null column of fixed score 0.
/// Masked entries get weight exactly 0. Result is (n, m + 1).
Var masked_softmax(Graph& g, Var scores, const AttentionMask& mask);

/// Mean negative log-likelihood in nats over rows whose target is not `ignore`.
Var cross_entropy(Graph& g, Var logits, std::span<const int> targets, int ignore = -1);

/// Weighted mean binary cross-entropy of (n, 1) logits; rows with weight 0 are skipped.
Var bce_with_logits(Graph& g, Var logits, std::span<const double> targets, std::span<const double> weights);

/// Mean over the listed rows of -log(sum of weights[row, j] for j in columns[i]).
Var neg_log_mass(Graph& g, Var weights, std::span<const std::size_t> rows,
                 std::span<const std::vector<std::size_t>> columns);

}  // namespace storyplan::nn
