#include "rlm/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace rlm {

Binder::Binder(Graph& g, const ParameterSet& params, Gradients* grads)
    : g_(g), params_(params), grads_(grads) {}

Var Binder::operator()(const std::string& name) {
  return at(params_.index_of(name));
}

Var Binder::at(std::size_t index) {
  if (auto it = bound_.find(index); it != bound_.end()) return it->second;
  std::vector<double>* sink = grads_ != nullptr ? &(*grads_)[index] : nullptr;
  Var v = g_.parameter(params_[index].value, sink);
  bound_.emplace(index, v);
  return v;
}

double loss_and_gradient(const ParameterSet& params, const LossBuilder& loss,
                         Gradients& grads) {
  Graph g(true);
  Binder bind(g, params, &grads);
  Var root = loss(g, bind);
  g.backward(root);
  return g.scalar(root);
}

namespace {

double evaluate(const ParameterSet& params, const LossBuilder& loss) {
  Graph g(false);
  Binder bind(g, params, nullptr);
  return g.scalar(loss(g, bind));
}

}  // namespace

GradCheckResult grad_check(ParameterSet& params, const LossBuilder& loss,
                           double h) {
  Gradients analytic(params);
  loss_and_gradient(params, loss, analytic);

  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    ParamCheck check;
    check.name = params[p].name;
    auto& data = params[p].value.storage();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = evaluate(params, loss);
      data[i] = saved - h;
      const double down = evaluate(params, loss);
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (i == 0 || rel > check.max_rel_error) {
        check.max_rel_error = rel;
        check.worst_index = i;
        check.analytic = a;
        check.numeric = numeric;
      }
    }
    result.max_rel_error = std::max(result.max_rel_error, check.max_rel_error);
    result.per_param.push_back(std::move(check));
  }
  return result;
}

}  // namespace rlm
