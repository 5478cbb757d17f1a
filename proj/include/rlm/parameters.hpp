#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "rlm/tensor.hpp"

namespace rlm {

struct Parameter {
  std::string name;
  Tensor value;
};

/// Ordered collection of named trainable tensors. Order is insertion order and
/// fixes every reduction over parameters (gradients, checkpoints, optimizer).
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const { return params_.size(); }
  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const;

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  Tensor& value(const std::string& name) { return params_[index_of(name)].value; }
  const Tensor& value(const std::string& name) const {
    return params_[index_of(name)].value;
  }

  std::size_t scalar_count() const;
  bool all_finite() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

/// Gradient buffers aligned with a ParameterSet. Accumulation is additive.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet& params);

  std::size_t size() const { return grads_.size(); }
  std::vector<double>& operator[](std::size_t i) { return grads_[i]; }
  const std::vector<double>& operator[](std::size_t i) const { return grads_[i]; }

  void zero();
  void add(const Gradients& other, double scale = 1.0);
  bool all_zero() const;
  double max_abs() const;

 private:
  std::vector<std::vector<double>> grads_;
};

/// Fills a tensor with N(0, std^2) draws in row-major order.
void fill_normal(Tensor& t, double std, std::mt19937_64& rng);

}  // namespace rlm
