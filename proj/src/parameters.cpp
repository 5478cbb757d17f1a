#include "rlm/parameters.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rlm {

std::size_t ParameterSet::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  params_.push_back(Parameter{std::move(name), std::move(value)});
  return params_.size() - 1;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw std::out_of_range("unknown parameter " + name);
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

bool ParameterSet::all_finite() const {
  return std::all_of(params_.begin(), params_.end(),
                     [](const Parameter& p) { return p.value.all_finite(); });
}

Gradients::Gradients(const ParameterSet& params) {
  grads_.reserve(params.size());
  for (const auto& p : params) grads_.emplace_back(p.value.size(), 0.0);
}

void Gradients::zero() {
  for (auto& g : grads_) std::fill(g.begin(), g.end(), 0.0);
}

void Gradients::add(const Gradients& other, double scale) {
  if (other.grads_.size() != grads_.size()) {
    throw std::invalid_argument("gradient set size mismatch");
  }
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    auto& dst = grads_[i];
    const auto& src = other.grads_[i];
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
  }
}

bool Gradients::all_zero() const {
  for (const auto& g : grads_) {
    for (double v : g) {
      if (v != 0.0) return false;
    }
  }
  return true;
}

double Gradients::max_abs() const {
  double m = 0.0;
  for (const auto& g : grads_) {
    for (double v : g) m = std::max(m, std::abs(v));
  }
  return m;
}

void fill_normal(Tensor& t, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std);
  for (double& x : t.storage()) x = dist(rng);
}

}  // namespace rlm
