#include "storyplan/nn/tensor.hpp"

#include <functional>
#include <numeric>
#include <stdexcept>

#include "storyplan/rng.hpp"

namespace storyplan::nn {

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  const std::size_t expected =
      std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<std::size_t>());
  if (shape_.empty() || expected != values_.size()) {
    throw std::invalid_argument("tensor value count does not match its shape");
  }
}

Parameter& ParameterSet::create(std::string name, std::size_t rows, std::size_t cols) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name " + name);
  params_.push_back(std::make_unique<Parameter>(std::move(name), Tensor(rows, cols)));
  return *params_.back();
}

Parameter& ParameterSet::create(std::string name, std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Parameter& p = create(std::move(name), rows, cols);
  for (auto& v : p.value.values()) v = stddev * rng.normal();
  return p;
}

Parameter* ParameterSet::find(std::string_view name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterSet::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

AttentionMask::AttentionMask(std::size_t queries, std::size_t keys)
    : queries_(queries), keys_(keys), bits_(queries * (keys + 1), 0) {
  for (std::size_t q = 0; q < queries; ++q) set_null(q, true);
}

AttentionMask AttentionMask::full(std::size_t queries, std::size_t keys) {
  AttentionMask m(queries, keys);
  for (std::size_t q = 0; q < queries; ++q) {
    for (std::size_t k = 0; k < keys; ++k) m.set(q, k, true);
  }
  return m;
}

AttentionMask AttentionMask::causal(std::size_t n) {
  AttentionMask m(n, n);
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t k = 0; k <= q; ++k) m.set(q, k, true);
  }
  return m;
}

bool AttentionMask::valid() const {
  for (std::size_t q = 0; q < queries_; ++q) {
    bool any = false;
    for (std::size_t k = 0; k <= keys_ && !any; ++k) any = allowed(q, k);
    if (!any) return false;
  }
  return true;
}

}  // namespace storyplan::nn
