#include "xalign/numeric/adam.h"

#include <cmath>

#include "xalign/error.h"

namespace xalign {

AdamState::AdamState(AdamConfig cfg, std::size_t num_params)
    : config(cfg), first_moment(num_params, 0.0), second_moment(num_params, 0.0) {
  if (config.total_steps > 0 && config.warmup_steps > config.total_steps)
    throw UsageError("adam: warmup_steps exceeds total_steps");
}

double warmup_lr(const AdamConfig& cfg, std::size_t step) {
  if (step == 0) throw UsageError("warmup_lr: step must be >= 1");
  if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps) {
    return cfg.base_lr * static_cast<double>(step) /
           static_cast<double>(cfg.warmup_steps);
  }
  if (cfg.schedule == LrSchedule::kLinearDecay && cfg.total_steps > cfg.warmup_steps) {
    if (step >= cfg.total_steps) return 0.0;
    return cfg.base_lr * static_cast<double>(cfg.total_steps - step) /
           static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  }
  return cfg.base_lr;
}

double adam_step(AdamState& state, std::span<double> params,
                 std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw NumericError("adam_step: parameter/gradient shape mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");

  ++state.step;
  const AdamConfig& cfg = state.config;
  const double lr = warmup_lr(state);
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grads[i];
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = m / bias1;
    const double v_hat = v / bias2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
  return lr;
}

}  // namespace xalign
