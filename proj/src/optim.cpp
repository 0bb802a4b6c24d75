#include "spin/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spin/errors.hpp"

namespace spin {

void adam_step(ParameterStore& params, const GradientMap& grads, AdamState& state, double lr,
               const AdamConfig& config) {
  // Validate everything before mutating anything.
  for (const auto& [name, g] : grads) {
    require_same_shape(params.at(name).shape(), g.shape(), ("adam_step " + name).c_str());
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto [m_it, m_new] = state.first_moment.try_emplace(name, Tensor(g.shape(), 0.0));
    auto [v_it, v_new] = state.second_moment.try_emplace(name, Tensor(g.shape(), 0.0));
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    require_same_shape(m.shape(), g.shape(), "adam_step moments");
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

double lr_schedule(std::int64_t step, double epoch, const ScheduleConfig& config) {
  if (step < 0) throw ValidationError("lr_schedule: negative step");
  double warm = 1.0;
  if (config.warmup_steps > 0 && step < config.warmup_steps) {
    warm = static_cast<double>(step) / static_cast<double>(config.warmup_steps);
  }
  const double period = config.restart_period_epochs;
  double phase = 0.0;
  if (period > 0.0) {
    phase = std::fmod(std::max(epoch, 0.0), period) / period;
  }
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
  return config.base_lr * warm * cosine;
}

}  // namespace spin
