#pragma once

#include <cstddef>
#include <vector>

#include "rlm/parameters.hpp"

namespace rlm {

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// First and second moments aligned with a ParameterSet, plus the step count
/// used for bias correction.
struct AdamState {
  std::size_t steps = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  bool operator==(const AdamState&) const = default;
};

/// Adam with decoupled weight decay: w <- w * (1 - lr*wd), then the Adam step.
class AdamW {
 public:
  AdamW(const ParameterSet& params, AdamConfig config);
  AdamW(const ParameterSet& params, AdamConfig config, AdamState state);

  void step(ParameterSet& params, const Gradients& grads);

  const AdamConfig& config() const { return config_; }
  const AdamState& state() const { return state_; }

 private:
  AdamConfig config_;
  AdamState state_;
};

}  // namespace rlm
