#include "storyplan/nn/graph.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace storyplan::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

Var Graph::push(Tensor value, bool requires_grad, Backward backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::constant(Tensor value) { return push(std::move(value), false, {}); }

Var Graph::input(Tensor value) { return push(std::move(value), tracking_, {}); }

Var Graph::parameter(Parameter& p) {
  Var v = push(p.value, tracking_, {});
  if (tracking_) nodes_[v.id].param = &p;
  return v;
}

Tensor Graph::grad(Var v) const {
  const auto& n = nodes_[v.id];
  return n.grad.size() ? n.grad : Tensor::zeros_like(n.value);
}

Tensor* Graph::grad_buffer(Var v) {
  auto& n = nodes_[v.id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.size() != n.value.size()) n.grad = Tensor::zeros_like(n.value);
  return &n.grad;
}

void Graph::backward(Var loss) {
  require(nodes_[loss.id].value.size() == 1, "backward needs a scalar loss");
  Tensor* seed = grad_buffer(loss);
  if (seed == nullptr) return;
  (*seed)[0] += 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      auto dst = n.param->grad.values();
      auto src = n.grad.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    if (n.backward) n.backward(*this, n.grad);
  }
}

Var matmul(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  require(A.cols() == B.rows(), "matmul: inner dimensions differ");
  const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
  Tensor C(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* c = C.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A(i, p);
      if (av == 0.0) continue;
      const double* brow = B.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) c[j] += av * brow[j];
    }
  }
  const bool rg = g.requires_grad(a) || g.requires_grad(b);
  return g.push(std::move(C), rg, [a, b, n, k, m](Graph& g, const Tensor& dC) {
    const Tensor& A = g.value(a);
    const Tensor& B = g.value(b);
    if (Tensor* dA = g.grad_buffer(a)) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* dc = dC.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B.data() + p * m;
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += dc[j] * brow[j];
          (*dA)(i, p) += s;
        }
      }
    }
    if (Tensor* dB = g.grad_buffer(b)) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* dc = dC.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A(i, p);
          if (av == 0.0) continue;
          double* db = dB->data() + p * m;
          for (std::size_t j = 0; j < m; ++j) db[j] += av * dc[j];
        }
      }
    }
  });
}

Var matmul_nt(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  require(A.cols() == B.cols(), "matmul_nt: inner dimensions differ");
  const std::size_t n = A.rows(), k = A.cols(), m = B.rows();
  Tensor C(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = A.data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = B.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      C(i, j) = s;
    }
  }
  const bool rg = g.requires_grad(a) || g.requires_grad(b);
  return g.push(std::move(C), rg, [a, b, n, k, m](Graph& g, const Tensor& dC) {
    const Tensor& A = g.value(a);
    const Tensor& B = g.value(b);
    if (Tensor* dA = g.grad_buffer(a)) {
      for (std::size_t i = 0; i < n; ++i) {
        double* da = dA->data() + i * k;
        for (std::size_t j = 0; j < m; ++j) {
          const double d = dC(i, j);
          if (d == 0.0) continue;
          const double* brow = B.data() + j * k;
          for (std::size_t p = 0; p < k; ++p) da[p] += d * brow[p];
        }
      }
    }
    if (Tensor* dB = g.grad_buffer(b)) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* arow = A.data() + i * k;
        for (std::size_t j = 0; j < m; ++j) {
          const double d = dC(i, j);
          if (d == 0.0) continue;
          double* db = dB->data() + j * k;
          for (std::size_t p = 0; p < k; ++p) db[p] += d * arow[p];
        }
      }
    }
  });
}

Var add(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  require(A.same_shape(B), "add: shape mismatch");
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i];
  const bool rg = g.requires_grad(a) || g.requires_grad(b);
  return g.push(std::move(C), rg, [a, b](Graph& g, const Tensor& dC) {
    for (Var v : {a, b}) {
      if (Tensor* d = g.grad_buffer(v)) {
        for (std::size_t i = 0; i < dC.size(); ++i) (*d)[i] += dC[i];
      }
    }
  });
}

Var add_row(Graph& g, Var a, Var row) {
  const Tensor& A = g.value(a);
  const Tensor& R = g.value(row);
  require(R.size() == A.cols(), "add_row: width mismatch");
  Tensor C = A;
  const std::size_t n = A.rows(), m = A.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) C(i, j) += R[j];
  }
  const bool rg = g.requires_grad(a) || g.requires_grad(row);
  return g.push(std::move(C), rg, [a, row, n, m](Graph& g, const Tensor& dC) {
    if (Tensor* d = g.grad_buffer(a)) {
      for (std::size_t i = 0; i < dC.size(); ++i) (*d)[i] += dC[i];
    }
    if (Tensor* d = g.grad_buffer(row)) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) (*d)[j] += dC(i, j);
      }
    }
  });
}

Var mul(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  require(A.same_shape(B), "mul: shape mismatch");
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= B[i];
  const bool rg = g.requires_grad(a) || g.requires_grad(b);
  return g.push(std::move(C), rg, [a, b](Graph& g, const Tensor& dC) {
    if (Tensor* d = g.grad_buffer(a)) {
      const Tensor& B = g.value(b);
      for (std::size_t i = 0; i < dC.size(); ++i) (*d)[i] += dC[i] * B[i];
    }
    if (Tensor* d = g.grad_buffer(b)) {
      const Tensor& A = g.value(a);
      for (std::size_t i = 0; i < dC.size(); ++i) (*d)[i] += dC[i] * A[i];
    }
  });
}

Var scale(Graph& g, Var a, double s) {
  Tensor C = g.value(a);
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= s;
  return g.push(std::move(C), g.requires_grad(a), [a, s](Graph& g, const Tensor& dC) {
    if (Tensor* d = g.grad_buffer(a)) {
      for (std::size_t i = 0; i < dC.size(); ++i) (*d)[i] += s * dC[i];
    }
  });
}

Var sigmoid(Graph& g, Var a) {
  Tensor C = g.value(a);
  for (std::size_t i = 0; i < C.size(); ++i) C[i] = 1.0 / (1.0 + std::exp(-C[i]));
  const std::uint32_t self = static_cast<std::uint32_t>(g.size());
  return g.push(std::move(C), g.requires_grad(a), [a, self](Graph& g, const Tensor& dC) {
    if (Tensor* d = g.grad_buffer(a)) {
      const Tensor& y = g.value(Var{self});
      for (std::size_t i = 0; i < dC.size(); ++i) (*d)[i] += dC[i] * y[i] * (1.0 - y[i]);
    }
  });
}

Var slice_cols(Graph& g, Var a, std::size_t begin, std::size_t count) {
  const Tensor& A = g.value(a);
  require(begin + count <= A.cols(), "slice_cols: out of range");
  const std::size_t n = A.rows(), m = A.cols();
  Tensor C(n, count);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < count; ++j) C(i, j) = A(i, begin + j);
  }
  return g.push(std::move(C), g.requires_grad(a), [a, begin, count, n, m](Graph& g, const Tensor& dC) {
    if (Tensor* d = g.grad_buffer(a)) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < count; ++j) (*d)[i * m + begin + j] += dC(i, j);
      }
    }
  });
}

Var concat_cols(Graph& g, std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: nothing to concatenate");
  const std::size_t n = g.value(parts[0]).rows();
  std::size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    require(g.value(p).rows() == n, "concat_cols: row mismatch");
    total += g.value(p).cols();
    rg = rg || g.requires_grad(p);
  }
  Tensor C(n, total);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& P = g.value(p);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < P.cols(); ++j) C(i, off + j) = P(i, j);
    }
    off += P.cols();
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return g.push(std::move(C), rg, [owned, n](Graph& g, const Tensor& dC) {
    std::size_t off = 0;
    for (Var p : owned) {
      const std::size_t w = g.value(p).cols();
      if (Tensor* d = g.grad_buffer(p)) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < w; ++j) (*d)(i, j) += dC(i, off + j);
        }
      }
      off += w;
    }
  });
}

Var sum(Graph& g, Var a) {
  const Tensor& A = g.value(a);
  double s = 0.0;
  for (double v : A.values()) s += v;
  return g.push(Tensor::scalar(s), g.requires_grad(a), [a](Graph& g, const Tensor& dC) {
    if (Tensor* d = g.grad_buffer(a)) {
      for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += dC[0];
    }
  });
}

Var embedding(Graph& g, Var table, std::span<const int> ids) {
  const Tensor& T = g.value(table);
  const std::size_t d = T.cols();
  Tensor C(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= T.rows()) {
      throw std::out_of_range("embedding index " + std::to_string(ids[i]) + " outside table of " +
                              std::to_string(T.rows()) + " rows");
    }
    auto src = T.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), C.row(i).begin());
  }
  std::vector<int> owned(ids.begin(), ids.end());
  return g.push(std::move(C), g.requires_grad(table), [table, owned, d](Graph& g, const Tensor& dC) {
    if (Tensor* dT = g.grad_buffer(table)) {
      for (std::size_t i = 0; i < owned.size(); ++i) {
        double* dst = dT->data() + static_cast<std::size_t>(owned[i]) * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += dC(i, j);
      }
    }
  });
}

Var im2col(Graph& g, Var x, std::size_t width, bool causal) {
  require(width >= 1, "im2col: width must be positive");
  require(causal || width % 2 == 1, "im2col: centered windows need an odd width");
  const Tensor& X = g.value(x);
  const std::size_t n = X.rows(), c = X.cols();
  const long offset = causal ? static_cast<long>(width) - 1 : static_cast<long>(width / 2);
  Tensor C(n, width * c);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t o = 0; o < width; ++o) {
      const long src = static_cast<long>(t) - offset + static_cast<long>(o);
      if (src < 0 || src >= static_cast<long>(n)) continue;
      for (std::size_t ch = 0; ch < c; ++ch) C(t, o * c + ch) = X(static_cast<std::size_t>(src), ch);
    }
  }
  return g.push(std::move(C), g.requires_grad(x), [x, n, c, width, offset](Graph& g, const Tensor& dC) {
    if (Tensor* dX = g.grad_buffer(x)) {
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t o = 0; o < width; ++o) {
          const long src = static_cast<long>(t) - offset + static_cast<long>(o);
          if (src < 0 || src >= static_cast<long>(n)) continue;
          for (std::size_t ch = 0; ch < c; ++ch) (*dX)(static_cast<std::size_t>(src), ch) += dC(t, o * c + ch);
        }
      }
    }
  });
}

Var masked_softmax(Graph& g, Var scores, const AttentionMask& mask) {
  const Tensor& S = g.value(scores);
  const std::size_t n = S.rows(), m = S.cols();
  require(mask.queries() == n && mask.keys() == m, "masked_softmax: mask shape mismatch");
  Tensor W(n, m + 1);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      if (mask.allowed(i, j)) mx = std::max(mx, S(i, j));
    }
    if (mask.null_allowed(i)) mx = std::max(mx, 0.0);
    require(std::isfinite(mx), "masked_softmax: a row allows no key");
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (mask.allowed(i, j)) z += W(i, j) = std::exp(S(i, j) - mx);
    }
    if (mask.null_allowed(i)) z += W(i, m) = std::exp(-mx);
    for (std::size_t j = 0; j <= m; ++j) W(i, j) /= z;
  }
  const std::uint32_t self = static_cast<std::uint32_t>(g.size());
  return g.push(std::move(W), g.requires_grad(scores), [scores, self, n, m](Graph& g, const Tensor& dW) {
    Tensor* dS = g.grad_buffer(scores);
    if (dS == nullptr) return;
    const Tensor& W = g.value(Var{self});
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j <= m; ++j) dot += W(i, j) * dW(i, j);
      for (std::size_t j = 0; j < m; ++j) (*dS)(i, j) += W(i, j) * (dW(i, j) - dot);
    }
  });
}

Var cross_entropy(Graph& g, Var logits, std::span<const int> targets, int ignore) {
  const Tensor& L = g.value(logits);
  const std::size_t n = L.rows(), v = L.cols();
  require(targets.size() == n, "cross_entropy: one target per row");
  Tensor P(n, v);
  double loss = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = L.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += P(i, j) = std::exp(row[j] - mx);
    for (std::size_t j = 0; j < v; ++j) P(i, j) /= z;
    if (targets[i] == ignore) continue;
    require(targets[i] >= 0 && static_cast<std::size_t>(targets[i]) < v, "cross_entropy: target out of range");
    loss += -(row[static_cast<std::size_t>(targets[i])] - mx - std::log(z));
    ++counted;
  }
  const double denom = counted ? static_cast<double>(counted) : 1.0;
  std::vector<int> owned(targets.begin(), targets.end());
  return g.push(Tensor::scalar(loss / denom), g.requires_grad(logits),
                [logits, P = std::move(P), owned, ignore, denom, n, v](Graph& g, const Tensor& dC) {
                  Tensor* dL = g.grad_buffer(logits);
                  if (dL == nullptr) return;
                  const double s = dC[0] / denom;
                  for (std::size_t i = 0; i < n; ++i) {
                    if (owned[i] == ignore) continue;
                    for (std::size_t j = 0; j < v; ++j) (*dL)(i, j) += s * P(i, j);
                    (*dL)(i, static_cast<std::size_t>(owned[i])) -= s;
                  }
                });
}

Var bce_with_logits(Graph& g, Var logits, std::span<const double> targets, std::span<const double> weights) {
  const Tensor& Z = g.value(logits);
  const std::size_t n = Z.size();
  require(targets.size() == n && weights.size() == n, "bce_with_logits: one target and weight per row");
  double loss = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] == 0.0) continue;
    const double z = Z[i];
    loss += weights[i] * (std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z))));
    wsum += weights[i];
  }
  const double denom = wsum > 0.0 ? wsum : 1.0;
  std::vector<double> t(targets.begin(), targets.end()), w(weights.begin(), weights.end());
  return g.push(Tensor::scalar(loss / denom), g.requires_grad(logits), [logits, t, w, denom](Graph& g, const Tensor& dC) {
    Tensor* dZ = g.grad_buffer(logits);
    if (dZ == nullptr) return;
    const Tensor& Z = g.value(logits);
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (w[i] == 0.0) continue;
      const double p = 1.0 / (1.0 + std::exp(-Z[i]));
      (*dZ)[i] += dC[0] * w[i] * (p - t[i]) / denom;
    }
  });
}

Var neg_log_mass(Graph& g, Var weights, std::span<const std::size_t> rows,
                 std::span<const std::vector<std::size_t>> columns) {
  require(rows.size() == columns.size(), "neg_log_mass: one column set per row");
  const Tensor& W = g.value(weights);
  constexpr double kFloor = 1e-12;
  std::vector<double> mass(rows.size(), 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j : columns[i]) mass[i] += W(rows[i], j);
    loss += -std::log(std::max(mass[i], kFloor));
  }
  const double denom = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  std::vector<std::size_t> r(rows.begin(), rows.end());
  std::vector<std::vector<std::size_t>> cols(columns.begin(), columns.end());
  return g.push(Tensor::scalar(loss / denom), g.requires_grad(weights),
                [weights, r, cols, mass, denom](Graph& g, const Tensor& dC) {
                  Tensor* dW = g.grad_buffer(weights);
                  if (dW == nullptr) return;
                  for (std::size_t i = 0; i < r.size(); ++i) {
                    if (mass[i] <= kFloor) continue;
                    for (std::size_t j : cols[i]) (*dW)(r[i], j) += -dC[0] / (mass[i] * denom);
                  }
                });
}

}  // namespace storyplan::nn
