#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace storyplan {
class Rng;
}

namespace storyplan::nn {

/// Dense row-major tensor of doubles. Layers treat it as a matrix: rows() is
/// the leading dimension and cols() the product of the rest.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape_{rows, cols}, values_(rows * cols, fill) {}
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_, std::vector<double>(t.size(), 0.0)); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const {
    std::size_t c = 1;
    for (std::size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
    return c;
  }
  std::size_t size() const { return values_.size(); }
  bool same_shape(const Tensor& o) const { return rows() == o.rows() && cols() == o.cols(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

struct Parameter {
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

/// Owns parameters at stable addresses, in creation order.
class ParameterSet {
 public:
  Parameter& create(std::string name, std::size_t rows, std::size_t cols);
  /// Gaussian init with the given standard deviation.
  Parameter& create(std::string name, std::size_t rows, std::size_t cols, double stddev, Rng& rng);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// Query rows x (key columns + one null column). The null column stands for a
/// zero-valued extra key, so a row that allows it is never empty.
class AttentionMask {
 public:
  AttentionMask() = default;
  /// All keys blocked, null slot allowed.
  AttentionMask(std::size_t queries, std::size_t keys);

  static AttentionMask full(std::size_t queries, std::size_t keys);
  /// Row t allows keys 0..t.
  static AttentionMask causal(std::size_t n);

  std::size_t queries() const { return queries_; }
  std::size_t keys() const { return keys_; }
  bool allowed(std::size_t q, std::size_t k) const { return bits_[q * (keys_ + 1) + k] != 0; }
  bool null_allowed(std::size_t q) const { return allowed(q, keys_); }
  void set(std::size_t q, std::size_t k, bool on) { bits_[q * (keys_ + 1) + k] = on ? 1 : 0; }
  void set_null(std::size_t q, bool on) { set(q, keys_, on); }

  /// Every row allows at least one column.
  bool valid() const;

 private:
  std::size_t queries_ = 0;
  std::size_t keys_ = 0;
  std::vector<std::uint8_t> bits_;
};

}  // namespace storyplan::nn
