#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rlm/autodiff.hpp"
#include "rlm/parameters.hpp"

namespace rlm {

/// Binds the tensors of a ParameterSet into one Graph, creating each leaf at
/// most once. With a null gradient set every leaf is a constant.
class Binder {
 public:
  Binder(Graph& g, const ParameterSet& params, Gradients* grads);

  Var operator()(const std::string& name);
  Var at(std::size_t index);
  Graph& graph() { return g_; }

 private:
  Graph& g_;
  const ParameterSet& params_;
  Gradients* grads_;
  std::unordered_map<std::size_t, Var> bound_;
};

/// Builds a scalar loss in the given graph, reading parameters via the binder.
using LossBuilder = std::function<Var(Graph&, Binder&)>;

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::vector<ParamCheck> per_param;
};

/// Central-difference gradient check of every scalar in `params`.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(ParameterSet& params, const LossBuilder& loss,
                           double h = 1e-5);

/// Evaluates the loss and its analytic gradient once.
double loss_and_gradient(const ParameterSet& params, const LossBuilder& loss,
                         Gradients& grads);

}  // namespace rlm
