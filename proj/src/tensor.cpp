#include "rlm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace rlm {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) {
    if (s == 0) {
      throw std::invalid_argument("tensor dimensions must be positive");
    }
    n *= s;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw std::invalid_argument("tensor data size " +
                                std::to_string(data_.size()) +
                                " does not match shape " + shape_string());
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor({rows, cols}, fill);
}

Tensor Tensor::row(std::vector<double> data) {
  const std::size_t n = data.size();
  return Tensor({1, n}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (shape_.size() < 2) return 1;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
  return r;
}

std::span<const double> Tensor::row_span(std::size_t r) const {
  return std::span<const double>(data_).subspan(r * cols(), cols());
}

std::span<double> Tensor::row_span(std::size_t r) {
  return std::span<double>(data_).subspan(r * cols(), cols());
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double x) { return std::isfinite(x); });
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of empty vector");
  double mx = logits[0];
  for (double x : logits) {
    if (!std::isfinite(x)) throw std::domain_error("non-finite logits");
    mx = std::max(mx, x);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of empty vector");
  double mx = logits[0];
  for (double x : logits) {
    if (!std::isfinite(x)) throw std::domain_error("non-finite logits");
    mx = std::max(mx, x);
  }
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

CrossEntropy cross_entropy(std::span<const double> dist, std::size_t target) {
  if (target >= dist.size()) {
    throw std::out_of_range("cross_entropy target " + std::to_string(target) +
                            " outside distribution of size " +
                            std::to_string(dist.size()));
  }
  CrossEntropy ce;
  double p = dist[target];
  if (!(p >= kProbFloor)) {
    p = kProbFloor;
    ce.clamped = true;
  }
  ce.loss = -std::log(p);
  return ce;
}

std::vector<double> layer_norm(std::span<const double> x,
                               std::span<const double> gamma,
                               std::span<const double> beta, double eps) {
  const std::size_t d = x.size();
  if (d < 2) throw std::invalid_argument("layer_norm needs d >= 2");
  if (gamma.size() != d || beta.size() != d) {
    throw std::invalid_argument("layer_norm gamma/beta size mismatch");
  }
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double n = (x[i] - mean) * inv;
    out[i] = gamma[i] * (std::isfinite(n) ? n : 0.0) + beta[i];
  }
  return out;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const std::size_t len = q.rows();
  if (q.size() == 0 || len == 0) throw std::invalid_argument("empty sequence");
  const std::size_t d = q.cols();
  if (k.rows() != len || v.rows() != len || k.cols() != d || v.cols() != d) {
    throw std::invalid_argument("attention shape mismatch");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor out = Tensor::matrix(len, d);
  std::vector<double> scores(len);
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j < len; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += q.at(i, c) * k.at(j, c);
      scores[j] = s * scale;
    }
    const auto p = softmax(scores);
    for (std::size_t j = 0; j < len; ++j) {
      for (std::size_t c = 0; c < d; ++c) out.at(i, c) += p[j] * v.at(j, c);
    }
  }
  return out;
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
}

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf =
      std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace rlm
