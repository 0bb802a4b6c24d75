#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "spin/data.hpp"
#include "spin/graph.hpp"
#include "spin/tensor.hpp"

namespace spin {

// Synthetic sensor network: nodes placed uniformly in the unit square,
// linked by a thresholded Gaussian kernel on their distances, with signals
// made of per-node sinusoids and a shared random walk, smoothed by diffusion
// over the graph, plus white noise.
struct SynthConfig {
  std::size_t nodes = 20;
  std::size_t steps = 2000;
  std::vector<std::int64_t> periods{24, 12};
  double radius = 0.4;          // kernel threshold delta
  double gamma = 0.05;          // kernel bandwidth
  double diffusion = 0.6;       // weight of the neighbourhood average per round
  std::size_t diffusion_rounds = 2;
  double drift_scale = 0.15;    // innovation std of the per-node random walk
  double drift_decay = 0.97;    // AR(1) coefficient of the walk
  double noise = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthData {
  Dataset dataset;  // fully visible, unnormalized
  Tensor distances;
  SensorGraph graph;
};

SynthData generate_synthetic(const SynthConfig& config);

}  // namespace spin
