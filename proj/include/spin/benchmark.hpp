#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "spin/data.hpp"
#include "spin/graph.hpp"
#include "spin/model.hpp"

namespace spin {

// Closed-form query-key pair counts of one layer.
//   SPIN, all steps:      (N + E) W^2
//   SPIN, observed keys:  W (sum_i obs_i + sum_{(j,i)} obs_j)
//   SPIN-H:               (N + E) K W + K sum_i keys_i, keys_i = obs_i or W
std::uint64_t expected_spin_pairs(const Mask& mask, const SensorGraph& graph, KeyFilter filter);
std::uint64_t expected_spin_h_pairs(const Mask& mask, const SensorGraph& graph, std::size_t hubs,
                                    KeyFilter filter);

struct BenchmarkConfig {
  std::vector<std::size_t> windows{8, 16, 32, 64};
  std::size_t nodes = 10;
  double radius = 0.45;
  double missing_rate = 0.25;
  std::size_t repeats = 3;
  std::uint64_t seed = 0;
  ModelConfig spin = ModelConfig::spin_defaults();
  ModelConfig spin_h = ModelConfig::spin_h_defaults();
};

struct BenchmarkRow {
  Variant variant = Variant::spin;
  std::size_t window = 0;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::vector<std::uint64_t> pairs;     // instrumented, per layer
  std::vector<std::uint64_t> expected;  // closed form, per layer
  double seconds = 0.0;                 // fastest forward pass over the repeats
  bool counts_match() const { return pairs == expected; }
};

// Forward passes of both variants over each window length on one random
// geometric graph with point-missing visibility.
std::vector<BenchmarkRow> run_complexity_benchmark(const BenchmarkConfig& config);

}  // namespace spin
