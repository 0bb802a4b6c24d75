#include "spin/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "spin/autodiff.hpp"
#include "spin/errors.hpp"

namespace spin {

namespace {

std::uint64_t keys_of(const Mask& mask, std::size_t node, KeyFilter filter) {
  if (filter == KeyFilter::all_steps) return mask.steps;
  std::uint64_t n = 0;
  for (std::size_t t = 0; t < mask.steps; ++t) n += mask.at(t, node);
  return n;
}

}  // namespace

std::uint64_t expected_spin_pairs(const Mask& mask, const SensorGraph& graph, KeyFilter filter) {
  const std::uint64_t W = mask.steps;
  if (filter == KeyFilter::all_steps) {
    return (graph.node_count() + graph.edge_count()) * W * W;
  }
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < graph.node_count(); ++i) total += W * keys_of(mask, i, filter);
  for (const Edge& e : graph.edges()) total += W * keys_of(mask, e.src, filter);
  return total;
}

std::uint64_t expected_spin_h_pairs(const Mask& mask, const SensorGraph& graph, std::size_t hubs,
                                    KeyFilter filter) {
  const std::uint64_t W = mask.steps;
  std::uint64_t total = (graph.node_count() + graph.edge_count()) * hubs * W;
  for (std::size_t i = 0; i < graph.node_count(); ++i) total += hubs * keys_of(mask, i, filter);
  return total;
}

std::vector<BenchmarkRow> run_complexity_benchmark(const BenchmarkConfig& config) {
  if (config.windows.empty() || config.nodes < 2 || config.repeats == 0) {
    throw ValidationError("benchmark needs window lengths, two or more nodes and one repeat");
  }
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t N = config.nodes;
  Tensor dist(Shape{N, N});
  std::vector<double> x(N), y(N);
  for (std::size_t i = 0; i < N; ++i) {
    x[i] = unit(rng);
    y[i] = unit(rng);
  }
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) dist.at(i, j) = std::hypot(x[i] - x[j], y[i] - y[j]);
  }
  const SensorGraph graph = build_adjacency_gaussian(dist, 0.1, config.radius);

  std::vector<BenchmarkRow> rows;
  for (const ModelConfig& mc : {config.spin, config.spin_h}) {
    const SpinModel model(mc, N);
    const ParameterStore params = model.initialize(config.seed + 1);
    for (std::size_t W : config.windows) {
      SpatioTemporalWindow window;
      window.steps = W;
      window.nodes = N;
      window.values.resize(W * N);
      for (double& v : window.values) v = unit(rng);
      window.mask = inject_point_missing(Mask(W, N, 1), config.missing_rate, config.seed + W).mask;
      window.eval_mask = Mask(W, N);
      for (std::size_t t = 0; t < W; ++t) window.step_index.push_back(static_cast<std::int64_t>(t));
      for (std::size_t i = 0; i < N; ++i) window.node_ids.push_back(i);

      BenchmarkRow row;
      row.variant = mc.variant;
      row.window = W;
      row.nodes = N;
      row.edges = graph.edge_count();
      row.seconds = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < config.repeats; ++r) {
        Tape tape;
        BoundParameters bound(tape, params, false);
        const auto start = std::chrono::steady_clock::now();
        const ForwardPass pass = model.forward(bound, window, graph);
        const double s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        row.seconds = std::min(row.seconds, s);
        if (r == 0) {
          for (std::size_t l = 0; l < pass.layers.size(); ++l) {
            const KeyFilter f = pass.layers[l].filter;
            row.pairs.push_back(pass.pairs_in_layer(l));
            row.expected.push_back(mc.variant == Variant::spin
                                       ? expected_spin_pairs(window.mask, graph, f)
                                       : expected_spin_h_pairs(window.mask, graph,
                                                               mc.hubs.count, f));
          }
        }
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace spin
