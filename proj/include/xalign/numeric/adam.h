#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace xalign {

enum class LrSchedule {
  kConstant,     // base_lr after warmup
  kLinearDecay,  // base_lr decays linearly to 0 at total_steps
};

struct AdamConfig {
  double base_lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 0;
  LrSchedule schedule = LrSchedule::kConstant;
};

// Adam optimizer state. `step` counts updates already applied.
struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;

  AdamState(AdamConfig cfg, std::size_t num_params);
};

// Learning rate for update number `step` (1-based), linear warmup to base_lr
// over warmup_steps.
double warmup_lr(const AdamConfig& cfg, std::size_t step);
inline double warmup_lr(const AdamState& state) {
  return warmup_lr(state.config, state.step);
}

// Applies one bias-corrected Adam update in place and returns the learning
// rate that was used.
double adam_step(AdamState& state, std::span<double> params,
                 std::span<const double> grads);

}  // namespace xalign
