#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "spin/parameters.hpp"

namespace spin {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
  std::int64_t step = 0;
};

// One bias-corrected Adam update of every parameter that has a gradient.
// Parameters without an entry in grads are left untouched.
void adam_step(ParameterStore& params, const GradientMap& grads, AdamState& state, double lr,
               const AdamConfig& config = {});

struct ScheduleConfig {
  double base_lr = 0.0008;
  std::int64_t warmup_steps = 12;
  double restart_period_epochs = 100.0;
};

// Linear warm-up over the first warmup_steps optimizer steps, multiplied by a
// cosine decay toward zero that restarts every restart_period_epochs.
// epoch may be fractional (epoch + batch / batches_per_epoch).
double lr_schedule(std::int64_t step, double epoch, const ScheduleConfig& config = {});

}  // namespace spin
