#include "sekd/adam.hpp"

#include <cmath>
#include <string>

#include "sekd/error.hpp"

namespace sekd {

double warmup_lr(double base_lr, long step, long total_steps, double warmup_ratio,
                 LrDecay decay) {
  const auto warmup = static_cast<long>(
      std::ceil(warmup_ratio * static_cast<double>(total_steps) - 1e-9));
  if (step < warmup) {
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  if (decay == LrDecay::none) {
    return base_lr;
  }
  // Reaches zero one step after the last update.
  return base_lr * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup);
}

std::string_view to_string(LrDecay d) { return d == LrDecay::linear ? "linear" : "none"; }

LrDecay parse_lr_decay(std::string_view name) {
  if (name == "linear") {
    return LrDecay::linear;
  }
  if (name == "none") {
    return LrDecay::none;
  }
  throw InvalidInput("lr_decay: unknown value '" + std::string(name) + "'");
}

template <typename T>
void adam_step(ModelParams<T> &params, const ModelParams<T> &grads, OptimizerState<T> &state,
               double lr, const AdamSettings &settings) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw InvalidInput("adam_step: parameter structure mismatch");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(settings.beta1);
  const T b2 = static_cast<T>(settings.beta2);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(settings.beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(settings.beta2, t)));
  const T rate = static_cast<T>(lr);
  const T eps = static_cast<T>(settings.eps);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i]->size() != p[i]->size()) {
      throw InvalidInput("adam_step: shape mismatch");
    }
    T *pd = p[i]->data.data();
    const T *gd = g[i]->data.data();
    T *md = m[i]->data.data();
    T *vd = v[i]->data.data();
    for (std::size_t k = 0; k < p[i]->size(); ++k) {
      md[k] = b1 * md[k] + (T(1) - b1) * gd[k];
      vd[k] = b2 * vd[k] + (T(1) - b2) * gd[k] * gd[k];
      const T mhat = md[k] * c1;
      const T vhat = vd[k] * c2;
      pd[k] -= rate * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template void adam_step<float>(ModelParams<float> &, const ModelParams<float> &,
                               OptimizerState<float> &, double, const AdamSettings &);
template void adam_step<double>(ModelParams<double> &, const ModelParams<double> &,
                                OptimizerState<double> &, double, const AdamSettings &);

} // namespace sekd
