#include "rlm/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace rlm {

namespace {

void check_config(const AdamConfig& c) {
  if (!(c.lr >= 0.0) || !(c.weight_decay >= 0.0) || !(c.eps > 0.0) || !(c.beta1 >= 0.0) ||
      !(c.beta1 < 1.0) || !(c.beta2 >= 0.0) || !(c.beta2 < 1.0)) {
    throw std::invalid_argument("invalid AdamW hyperparameters");
  }
}

}  // namespace

AdamW::AdamW(const ParameterSet& params, AdamConfig config) : config_(config) {
  check_config(config_);
  for (const auto& p : params) {
    state_.m.emplace_back(p.value.size(), 0.0);
    state_.v.emplace_back(p.value.size(), 0.0);
  }
}

AdamW::AdamW(const ParameterSet& params, AdamConfig config, AdamState state)
    : config_(config), state_(std::move(state)) {
  check_config(config_);
  if (state_.m.size() != params.size() || state_.v.size() != params.size()) {
    throw std::invalid_argument("optimizer state does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state_.m[i].size() != params[i].value.size() ||
        state_.v[i].size() != params[i].value.size()) {
      throw std::invalid_argument("optimizer state for " + params[i].name +
                                  " has the wrong size");
    }
  }
}

void AdamW::step(ParameterSet& params, const Gradients& grads) {
  if (grads.size() != params.size() || state_.m.size() != params.size()) {
    throw std::invalid_argument("gradients do not match parameters");
  }
  ++state_.steps;
  const double t = static_cast<double>(state_.steps);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  const double decay = 1.0 - config_.lr * config_.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].value.storage();
    auto& m = state_.m[i];
    auto& v = state_.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      w[j] *= decay;
      w[j] -= config_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
    }
  }
}

}  // namespace rlm
