#include <cmath>
#include <random>

#include "doctest.h"
#include "spin/benchmark.hpp"
#include "spin/errors.hpp"
#include "spin/model.hpp"
#include "support.hpp"

using namespace spin;
using spin::testing::Vec;

namespace {

struct Case {
  ModelConfig config;
  SpatioTemporalWindow window;
  SensorGraph graph;
  ParameterStore params;
};

Case random_case(std::mt19937_64& rng, std::size_t width = 6) {
  const std::size_t W = 2 + rng() % 6;
  const std::size_t N = 1 + rng() % 4;
  const std::size_t L = 1 + rng() % 3;
  const std::size_t eta = 1 + rng() % L;
  const std::size_t K = 1 + rng() % 3;
  const std::size_t dz = 3 + rng() % 4;
  Case c{testing::small_spin_h(L, eta, K, dz, width),
         testing::random_window(W, N, testing::random_mask(W, N, 0.6, rng), rng,
                                std::int64_t(rng() % 50)),
         testing::random_graph(N, 0.4, rng),
         {}};
  c.config.hubs.per_node = rng() % 2 == 0;
  c.config.shared_readout = rng() % 2 == 0;
  c.params = SpinModel(c.config, N).initialize(rng());
  return c;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::fabs(a[k] - b[k]));
  return m;
}

}  // namespace

TEST_CASE("hub forward matches the dense reference") {
  std::mt19937_64 rng(202);
  for (int trial = 0; trial < 25; ++trial) {
    CAPTURE(trial);
    const Case c = random_case(rng);
    const SpinModel model(c.config, c.window.nodes);
    const ImputationOutput out = model.impute(c.params, c.window, c.graph);
    const auto dense = testing::dense_spin_h_forward(c.params, c.config, c.window, c.graph);
    REQUIRE(out.layers.size() == c.config.layers);
    for (std::size_t l = 0; l < c.config.layers; ++l) {
      CHECK(max_abs_diff(out.layers[l], dense.outputs[l]) <= 1e-12);
    }
    CHECK(dense.max_alpha_error <= 1e-12);
  }
}

TEST_CASE("hub pair counts follow the closed form") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const Case c = random_case(rng);
    const SpinModel model(c.config, c.window.nodes);
    Tape tape;
    BoundParameters bound(tape, c.params, false);
    const ForwardPass pass = model.forward(bound, c.window, c.graph);
    const std::uint64_t W = c.window.steps, N = c.window.nodes, E = c.graph.edge_count();
    const std::uint64_t K = c.config.hubs.count;
    for (std::size_t l = 0; l < c.config.layers; ++l) {
      const KeyFilter f = l < c.config.eta ? KeyFilter::observed_only : KeyFilter::all_steps;
      CHECK(pass.pairs_in_layer(l) == expected_spin_h_pairs(c.window.mask, c.graph, K, f));
      const std::uint64_t keys = f == KeyFilter::all_steps ? N * W : c.window.mask.count();
      CHECK(pass.pairs_in_layer(l) == (N + E) * K * W + K * keys);
      CHECK(pass.layers[l].stats.max_normalization_error <= 1e-12);
    }
  }
}

TEST_CASE("hub outputs ignore values behind the mask") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Case c = random_case(rng);
    const SpinModel model(c.config, c.window.nodes);
    const auto base = model.impute(c.params, c.window, c.graph);
    SpatioTemporalWindow changed = c.window;
    for (std::size_t k = 0; k < changed.values.size(); ++k) {
      if (!changed.mask.bits[k]) changed.values[k] = std::nan("");
    }
    CHECK(model.impute(c.params, changed, c.graph).layers == base.layers);
  }
}

TEST_CASE("a single hub is a per-node summary") {
  // With K = 1 each node-from-hub set has exactly one key, so the self
  // context is the hub_self activation of that hub for every step.
  std::mt19937_64 rng(14);
  ModelConfig cfg = testing::small_spin_h(1, 1, 1, 4, 6);
  const std::size_t W = 5, N = 3;
  const auto w = testing::random_window(W, N, Mask(W, N, 1), rng);
  const SensorGraph g(N, {{0, 1, 1.0}, {1, 2, 1.0}});
  const SpinModel model(cfg, N);
  const ParameterStore p = model.initialize(8);
  Tape tape;
  BoundParameters bound(tape, p, false);
  const Value h0 = model.init_state(bound, w);
  const Value z0 = model.initial_hubs(bound, w);
  CHECK(z0.shape() == Shape{N, 4});
  const Value z1 = model.hub_update(bound, 0, h0, z0, w.mask, KeyFilter::observed_only);
  AttentionStats stats;
  const auto ctx = model.node_update_from_hubs(bound, 0, h0, z1, g, W, &stats);
  CHECK(stats.pairs == (N + g.edge_count()) * W);
  CHECK(stats.empty_sets == 0);
  const auto dense = testing::dense_spin_h_forward(p, cfg, w, g);
  CHECK(max_abs_diff(model.impute(p, w, g).final_layer(), dense.outputs.back()) <= 1e-12);
}

TEST_CASE("identical hubs produce identical hub states") {
  std::mt19937_64 rng(15);
  ModelConfig cfg = testing::small_spin_h(2, 1, 3, 4, 6);
  const std::size_t W = 4, N = 2;
  const auto w = testing::random_window(W, N, testing::random_mask(W, N, 0.7, rng), rng);
  const SpinModel model(cfg, N);
  ParameterStore p = model.initialize(4);
  Tensor& base = p.at("hubs.base");
  for (std::size_t k = 1; k < 3; ++k) {
    for (std::size_t c = 0; c < 4; ++c) base.at(k, c) = base.at(0, c);
  }
  Tape tape;
  BoundParameters bound(tape, p, false);
  const Value h0 = model.init_state(bound, w);
  const Value z1 =
      model.hub_update(bound, 0, h0, model.initial_hubs(bound, w), w.mask, KeyFilter::all_steps);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t k = 1; k < 3; ++k) {
      for (std::size_t c = 0; c < 4; ++c) CHECK(z1.data().at(i * 3 + k, c) == z1.data().at(i * 3, c));
    }
  }
}

TEST_CASE("per-node hub bases") {
  ModelConfig cfg = testing::small_spin_h(1, 1, 2, 3, 4);
  cfg.hubs.per_node = true;
  const ParameterStore p = SpinModel(cfg, 5).initialize(0);
  CHECK(p.at("hubs.base").shape() == Shape{10, 3});
  cfg.hubs.per_node = false;
  CHECK(SpinModel(cfg, 5).initialize(0).at("hubs.base").shape() == Shape{2, 3});
}

TEST_CASE("hub parameter gradients agree with central differences") {
  std::mt19937_64 rng(91);
  for (int trial = 0; trial < 3; ++trial) {
    Case c = random_case(rng, 4);
    const SpinModel model(c.config, c.window.nodes);
    std::normal_distribution<double> g;
    Vec weights(c.window.steps * c.window.nodes);
    for (double& x : weights) x = g(rng);
    auto loss_value = [&](BoundParameters& bound) {
      const ForwardPass pass = model.forward(bound, c.window, c.graph);
      Tape& tape = bound.tape();
      Value total = tape.constant(Tensor::scalar(0.0));
      for (const Value& out : pass.layer_outputs) {
        total = add(total, sum(mul(out, tape.constant(Tensor(out.shape(), weights)))));
      }
      return total;
    };
    Tape tape;
    BoundParameters bound(tape, c.params);
    tape.backward(loss_value(bound));
    const auto check = testing::check_parameter_gradients(
        c.params, bound.gradients(),
        [&](const ParameterStore& s) {
          Tape t;
          BoundParameters b(t, s, false);
          return loss_value(b).data()[0];
        },
        1e-5, 1e-5);
    CAPTURE(check.worst);
    CAPTURE(check.worst_analytic);
    CAPTURE(check.worst_numeric);
    CHECK(check.max_rel_error < 1e-5);
  }
}
