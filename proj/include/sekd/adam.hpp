#pragma once

#include <string_view>

#include "sekd/seq_model.hpp"

namespace sekd {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct OptimizerState {
  ModelParams<T> first_moment;
  ModelParams<T> second_moment;
  long step = 0;

  static OptimizerState zeros(const ModelConfig &config) {
    return {ModelParams<T>::zeros(config), ModelParams<T>::zeros(config), 0};
  }
};

/// What happens to the learning rate after warmup.
enum class LrDecay { none, linear };

std::string_view to_string(LrDecay d);
LrDecay parse_lr_decay(std::string_view name);

/// Learning rate for 0-based `step`: linear ramp over the first
/// ceil(warmup_ratio * total_steps) steps, then either constant or a linear
/// decay towards zero at total_steps.
double warmup_lr(double base_lr, long step, long total_steps, double warmup_ratio,
                 LrDecay decay = LrDecay::none);

/// One bias-corrected Adam update in place.
template <typename T>
void adam_step(ModelParams<T> &params, const ModelParams<T> &grads, OptimizerState<T> &state,
               double lr, const AdamSettings &settings = {});

} // namespace sekd
