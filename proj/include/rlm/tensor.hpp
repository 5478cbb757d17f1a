#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rlm {

/// Probability floor applied before every log of a model probability.
inline constexpr double kProbFloor = 1e-12;

/// Dense row-major array of doubles.
///
/// Rank-1 tensors are treated as a single row by the matrix accessors, so a
/// vector of size d reports rows() == 1 and cols() == d.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Tensor row(std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<const double> row_span(std::size_t r) const;
  std::span<double> row_span(std::size_t r);

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool all_finite() const;
  std::string shape_string() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
};

/// Numerically stable softmax. Throws std::domain_error("non-finite logits").
std::vector<double> softmax(std::span<const double> logits);

/// log-softmax with the same stability contract as softmax().
std::vector<double> log_softmax(std::span<const double> logits);

struct CrossEntropy {
  double loss = 0.0;
  bool clamped = false;  // dist[target] fell below kProbFloor
};

/// -log dist[target], with the probability clamped at kProbFloor.
CrossEntropy cross_entropy(std::span<const double> dist, std::size_t target);

/// gamma * (x - mean) / sqrt(var + eps) + beta over a single vector.
std::vector<double> layer_norm(std::span<const double> x,
                               std::span<const double> gamma,
                               std::span<const double> beta, double eps);

/// Single-head unmasked scaled dot-product attention:
/// row i = softmax(q_i K^T / sqrt(d)) V.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Exact (erf based) GELU.
double gelu(double x);
double gelu_grad(double x);

}  // namespace rlm
