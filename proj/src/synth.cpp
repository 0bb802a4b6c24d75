#include "spin/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "spin/errors.hpp"

namespace spin {

void SynthConfig::validate() const {
  if (nodes < 2 || steps < 2) throw ValidationError("synthetic data needs at least 2 nodes and steps");
  for (auto p : periods) {
    if (p <= 0) throw ValidationError("synthetic periods must be positive");
  }
  if (!(radius > 0.0) || !(gamma > 0.0) || diffusion < 0.0 || diffusion > 1.0 || noise < 0.0 ||
      drift_scale < 0.0 || drift_decay < 0.0 || drift_decay >= 1.0) {
    throw ValidationError("synthetic generator parameters out of range");
  }
}

SynthData generate_synthetic(const SynthConfig& config) {
  config.validate();
  const std::size_t N = config.nodes;
  const std::size_t T = config.steps;
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> x(N), y(N);
  for (std::size_t i = 0; i < N; ++i) {
    x[i] = unit(rng);
    y[i] = unit(rng);
  }
  Tensor dist(Shape{N, N});
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) dist.at(i, j) = std::hypot(x[i] - x[j], y[i] - y[j]);
  }
  SensorGraph graph = build_adjacency_gaussian(dist, config.gamma, config.radius);

  // Raw per-node signal: seasonal terms plus an AR(1) drift.
  std::vector<double> amp(N * config.periods.size());
  std::vector<double> phase(amp.size());
  for (std::size_t k = 0; k < amp.size(); ++k) {
    amp[k] = 0.5 + unit(rng);
    phase[k] = 2.0 * std::numbers::pi * unit(rng);
  }
  std::vector<double> level(N);
  for (double& l : level) l = 2.0 * gauss(rng);
  std::vector<double> drift(N, 0.0);
  std::vector<double> raw(T * N);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < N; ++i) {
      drift[i] = config.drift_decay * drift[i] + config.drift_scale * gauss(rng);
      double v = level[i] + drift[i];
      for (std::size_t p = 0; p < config.periods.size(); ++p) {
        const double w = 2.0 * std::numbers::pi / static_cast<double>(config.periods[p]);
        v += amp[i * config.periods.size() + p] * std::sin(w * static_cast<double>(t) +
                                                           phase[i * config.periods.size() + p]);
      }
      raw[t * N + i] = v;
    }
  }

  // Diffusion: x_i <- (1 - beta) x_i + beta * weighted mean of in-neighbours.
  std::vector<double> next(N);
  for (std::size_t r = 0; r < config.diffusion_rounds; ++r) {
    for (std::size_t t = 0; t < T; ++t) {
      double* row = raw.data() + t * N;
      for (std::size_t i = 0; i < N; ++i) {
        double num = 0.0;
        double den = 0.0;
        for (const Neighbor& nb : graph.in_neighbors(i)) {
          num += nb.weight * row[nb.node];
          den += nb.weight;
        }
        next[i] = den > 0.0 ? (1.0 - config.diffusion) * row[i] + config.diffusion * num / den
                            : row[i];
      }
      std::copy(next.begin(), next.end(), row);
    }
  }
  for (double& v : raw) v += config.noise * gauss(rng);

  SynthData out;
  out.dataset.steps = T;
  out.dataset.nodes = N;
  out.dataset.values = std::move(raw);
  out.dataset.mask = Mask(T, N, 1);
  out.dataset.eval_mask = Mask(T, N, 0);
  out.dataset.timestamps.resize(T);
  for (std::size_t t = 0; t < T; ++t) out.dataset.timestamps[t] = static_cast<std::int64_t>(t);
  for (std::size_t i = 0; i < N; ++i) out.dataset.sensor_ids.push_back("s" + std::to_string(i));
  out.distances = std::move(dist);
  out.graph = std::move(graph);
  return out;
}

}  // namespace spin
