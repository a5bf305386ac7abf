#pragma once

#include <cstdint>
#include <utility>

#include "dusa/core.hpp"

namespace dusa {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moments keyed like the parameters they track.
struct OptState {
  ParamSet m;
  ParamSet v;
  std::int64_t step = 0;
};

/// Bias-corrected Adam. Parameters absent from `grads` are left untouched and
/// their moments are not advanced.
void adam_update(ParamSet& params, const ParamSet& grads, OptState& state, const AdamConfig& cfg);

std::pair<ParamSet, OptState> adam_step(const ParamSet& params, const ParamSet& grads, const OptState& state,
                                        const AdamConfig& cfg);

/// Adam with per-prefix learning rates: a parameter uses the rate of the
/// longest matching prefix, or the base rate when none matches.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void set_lr(const std::string& prefix, double lr) { prefix_lr_[prefix] = lr; }
  void step(ParamSet& params, const ParamSet& grads);

  const OptState& state() const { return state_; }
  const AdamConfig& config() const { return cfg_; }
  void reset() { state_ = OptState{}; }

 private:
  AdamConfig cfg_;
  std::map<std::string, double> prefix_lr_;
  OptState state_;
};

}  // namespace dusa
