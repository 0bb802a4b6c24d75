#pragma once

// Shared generators and reference implementations for the test binaries.
// The oracles here deliberately avoid the library's autodiff and fused
// attention: they evaluate every message with plain loops.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <numeric>
#include <random>
#include <vector>

#include "spin/autodiff.hpp"
#include "spin/data.hpp"
#include "spin/encoding.hpp"
#include "spin/graph.hpp"
#include "spin/model.hpp"
#include "spin/parameters.hpp"

namespace spin::testing {

using Vec = std::vector<double>;

inline Mask random_mask(std::size_t steps, std::size_t nodes, double keep, std::mt19937_64& rng) {
  std::bernoulli_distribution b(keep);
  Mask m(steps, nodes);
  for (auto& bit : m.bits) bit = b(rng) ? 1 : 0;
  return m;
}

// Window with N(0, 1) values everywhere; `mask` decides what is visible.
inline SpatioTemporalWindow random_window(std::size_t steps, std::size_t nodes, const Mask& mask,
                                          std::mt19937_64& rng, std::int64_t first_step = 0) {
  std::normal_distribution<double> g(0.0, 1.0);
  SpatioTemporalWindow w;
  w.steps = steps;
  w.nodes = nodes;
  w.values.resize(steps * nodes);
  for (double& v : w.values) v = g(rng);
  w.mask = mask;
  w.eval_mask = Mask(steps, nodes);
  for (std::size_t t = 0; t < steps; ++t) w.step_index.push_back(first_step + std::int64_t(t));
  w.node_ids.resize(nodes);
  std::iota(w.node_ids.begin(), w.node_ids.end(), std::size_t{0});
  return w;
}

// Directed graph with each ordered pair present with probability p.
inline SensorGraph random_graph(std::size_t nodes, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p);
  std::uniform_real_distribution<double> w(0.1, 1.0);
  std::vector<Edge> edges;
  for (std::size_t j = 0; j < nodes; ++j) {
    for (std::size_t i = 0; i < nodes; ++i) {
      if (i != j && b(rng)) edges.push_back({j, i, w(rng)});
    }
  }
  return SensorGraph(nodes, std::move(edges));
}

inline std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

inline ModelConfig small_spin(std::size_t layers, std::size_t eta, std::size_t width = 8) {
  ModelConfig c = ModelConfig::spin_defaults();
  c.layers = layers;
  c.eta = eta;
  c.hidden_dim = width;
  c.mlp_hidden = width;
  c.encoding.spatial_dim = 4;
  c.encoding.output_dim = width;
  c.encoding.hidden = width;
  return c;
}

inline ModelConfig small_spin_h(std::size_t layers, std::size_t eta, std::size_t hubs,
                                std::size_t hub_dim, std::size_t width = 8) {
  ModelConfig c = small_spin(layers, eta, width);
  c.variant = Variant::spin_h;
  c.hubs.count = hubs;
  c.hubs.dim = hub_dim;
  return c;
}

// ---------------------------------------------------------------------------
// Plain-loop reference model.

inline Vec concat(std::initializer_list<const Vec*> parts) {
  Vec out;
  for (const Vec* p : parts) out.insert(out.end(), p->begin(), p->end());
  return out;
}

// Perceptron from store entries "<prefix>.l<k>.weight" [in, out] and ".bias".
inline Vec dense_mlp(const ParameterStore& store, const std::string& prefix, const Vec& input) {
  Vec x = input;
  for (std::size_t l = 0;; ++l) {
    const std::string w = prefix + ".l" + std::to_string(l) + ".weight";
    if (!store.contains(w)) break;
    const Tensor& W = store.at(w);
    const Tensor& b = store.at(prefix + ".l" + std::to_string(l) + ".bias");
    if (W.rows() != x.size()) throw std::runtime_error("oracle width mismatch at " + w);
    Vec y(W.cols());
    for (std::size_t o = 0; o < W.cols(); ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * W.at(i, o);
      y[o] = s;
    }
    const bool last = !store.contains(prefix + ".l" + std::to_string(l + 1) + ".weight");
    if (!last) {
      for (double& v : y) v = std::max(v, 0.0);
    }
    x = std::move(y);
  }
  return x;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

struct DenseAttention {
  Vec context;       // sum alpha * message, zero for an empty set
  Vec alpha;         // per key
};

// Evaluates MLP([key, query]) for every key, scores with w, softmax, sum.
inline DenseAttention dense_attention(const ParameterStore& store, const std::string& block,
                                      const std::vector<Vec>& keys, const Vec& query,
                                      std::size_t out_dim) {
  DenseAttention r;
  r.context.assign(out_dim, 0.0);
  if (keys.empty()) return r;
  const Tensor& w = store.at(block + ".score");
  const Vec score(w.values().begin(), w.values().end());
  std::vector<Vec> messages;
  Vec logits;
  for (const Vec& k : keys) {
    messages.push_back(dense_mlp(store, block + ".msg", concat({&k, &query})));
    logits.push_back(std::clamp(dot(messages.back(), score), -60.0, 60.0));
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double norm = 0.0;
  for (double& l : logits) norm += (l = std::exp(l - mx));
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const double a = logits[k] / norm;
    r.alpha.push_back(a);
    for (std::size_t c = 0; c < out_dim; ++c) r.context[c] += a * messages[k][c];
  }
  return r;
}

// H(0) by direct evaluation of the encoder and the two initial perceptrons.
inline std::vector<Vec> dense_init_state(const ParameterStore& store, const ModelConfig& config,
                                         const SpatioTemporalWindow& window) {
  std::vector<Vec> h(window.steps * window.nodes);
  const Tensor& V = store.at("encoding.spatial");
  for (std::size_t t = 0; t < window.steps; ++t) {
    const Vec u = temporal_encoding(window.step_index[t], config.encoding.periods);
    for (std::size_t i = 0; i < window.nodes; ++i) {
      const auto vrow = V.row(window.node_ids[i]);
      const Vec v(vrow.begin(), vrow.end());
      const Vec uv = concat({&u, &v});
      const Vec q = config.encoding.identity_fusion ? uv : dense_mlp(store, "encoding.rho", uv);
      const std::size_t k = t * window.nodes + i;
      if (window.mask.bits[k]) {
        const Vec x{window.values[k]};
        h[k] = dense_mlp(store, "init.observed", concat({&x, &q}));
      } else {
        h[k] = dense_mlp(store, "init.target", q);
      }
    }
  }
  return h;
}

struct DenseSpinResult {
  std::vector<Vec> outputs;  // per layer, W*N predictions
  double max_alpha_error = 0.0;
};

// Reference SPIN stack: explicit enumeration of every query-key pair.
inline DenseSpinResult dense_spin_forward(const ParameterStore& store, const ModelConfig& config,
                                          const SpatioTemporalWindow& window,
                                          const SensorGraph& graph) {
  const std::size_t W = window.steps;
  const std::size_t N = window.nodes;
  const std::size_t d = config.hidden_dim;
  DenseSpinResult res;
  std::vector<Vec> h = dense_init_state(store, config, window);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const bool filtered = l < config.eta;
    const std::string prefix = "layer" + std::to_string(l);
    std::vector<Vec> next(W * N);
    for (std::size_t t = 0; t < W; ++t) {
      for (std::size_t i = 0; i < N; ++i) {
        const Vec& query = h[t * N + i];
        std::vector<Vec> keys;
        for (std::size_t s = 0; s < W; ++s) {
          if (!filtered || window.mask.at(s, i)) keys.push_back(h[s * N + i]);
        }
        const DenseAttention self = dense_attention(store, prefix + ".self", keys, query, d);
        Vec neighbor(d, 0.0);
        for (const Neighbor& nb : graph.in_neighbors(i)) {
          std::vector<Vec> nkeys;
          for (std::size_t s = 0; s < W; ++s) {
            if (!filtered || window.mask.at(s, nb.node)) nkeys.push_back(h[s * N + nb.node]);
          }
          const DenseAttention e = dense_attention(store, prefix + ".cross", nkeys, query, d);
          for (std::size_t c = 0; c < d; ++c) neighbor[c] += e.context[c];
          if (!e.alpha.empty()) {
            const double sum = std::accumulate(e.alpha.begin(), e.alpha.end(), 0.0);
            res.max_alpha_error = std::max(res.max_alpha_error, std::fabs(sum - 1.0));
          }
        }
        if (!self.alpha.empty()) {
          const double sum = std::accumulate(self.alpha.begin(), self.alpha.end(), 0.0);
          res.max_alpha_error = std::max(res.max_alpha_error, std::fabs(sum - 1.0));
        }
        next[t * N + i] = dense_mlp(store, prefix + ".update",
                                    concat({&query, &self.context, &neighbor}));
      }
    }
    h = std::move(next);
    const std::string readout = config.shared_readout ? "readout" : prefix + ".readout";
    Vec y(W * N);
    for (std::size_t k = 0; k < W * N; ++k) y[k] = dense_mlp(store, readout, h[k])[0];
    res.outputs.push_back(std::move(y));
  }
  return res;
}

// Reference SPIN-H stack with explicit per-hub and per-step messages.
inline DenseSpinResult dense_spin_h_forward(const ParameterStore& store, const ModelConfig& config,
                                            const SpatioTemporalWindow& window,
                                            const SensorGraph& graph) {
  const std::size_t W = window.steps;
  const std::size_t N = window.nodes;
  const std::size_t K = config.hubs.count;
  const std::size_t d = config.hidden_dim;
  const std::size_t dz = config.hubs.dim;
  DenseSpinResult res;
  std::vector<Vec> h = dense_init_state(store, config, window);
  const Tensor& base = store.at("hubs.base");
  std::vector<Vec> z(N * K);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      const auto row = base.row(config.hubs.per_node ? window.node_ids[i] * K + k : k);
      z[i * K + k] = Vec(row.begin(), row.end());
    }
  }
  auto track = [&](const DenseAttention& a) {
    if (a.alpha.empty()) return;
    const double sum = std::accumulate(a.alpha.begin(), a.alpha.end(), 0.0);
    res.max_alpha_error = std::max(res.max_alpha_error, std::fabs(sum - 1.0));
  };
  for (std::size_t l = 0; l < config.layers; ++l) {
    const bool filtered = l < config.eta;
    const std::string prefix = "layer" + std::to_string(l);
    std::vector<Vec> zt(N * K);
    for (std::size_t i = 0; i < N; ++i) {
      std::vector<Vec> keys;
      for (std::size_t t = 0; t < W; ++t) {
        if (!filtered || window.mask.at(t, i)) keys.push_back(h[t * N + i]);
      }
      for (std::size_t k = 0; k < K; ++k) {
        const Vec& zk = z[i * K + k];
        const DenseAttention c = dense_attention(store, prefix + ".hub", keys, zk, dz);
        track(c);
        zt[i * K + k] = dense_mlp(store, prefix + ".hub_state", concat({&zk, &c.context}));
      }
    }
    std::vector<Vec> next(W * N);
    for (std::size_t t = 0; t < W; ++t) {
      for (std::size_t i = 0; i < N; ++i) {
        const Vec& query = h[t * N + i];
        const std::vector<Vec> own(zt.begin() + i * K, zt.begin() + (i + 1) * K);
        const DenseAttention self = dense_attention(store, prefix + ".hub_self", own, query, d);
        track(self);
        Vec neighbor(d, 0.0);
        for (const Neighbor& nb : graph.in_neighbors(i)) {
          const std::vector<Vec> other(zt.begin() + nb.node * K, zt.begin() + (nb.node + 1) * K);
          const DenseAttention e = dense_attention(store, prefix + ".hub_cross", other, query, d);
          track(e);
          for (std::size_t c = 0; c < d; ++c) neighbor[c] += e.context[c];
        }
        next[t * N + i] = dense_mlp(store, prefix + ".update",
                                    concat({&query, &self.context, &neighbor}));
      }
    }
    h = std::move(next);
    z = std::move(zt);
    const std::string readout = config.shared_readout ? "readout" : prefix + ".readout";
    Vec y(W * N);
    for (std::size_t k = 0; k < W * N; ++k) y[k] = dense_mlp(store, readout, h[k])[0];
    res.outputs.push_back(std::move(y));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Finite differences.

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor) {
  return std::fabs(analytic - numeric) /
         std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

// Central differences of f over every scalar of every parameter in `store`.
// A coordinate counts as matching if either step size h or h / 10 agrees,
// which rules out false alarms from a rectifier kink inside [x - h, x + h].
inline GradCheck check_parameter_gradients(
    ParameterStore& store, const GradientMap& analytic,
    const std::function<double(const ParameterStore&)>& f, double h, double floor) {
  GradCheck out;
  for (auto& [name, tensor] : store.entries()) {
    Tensor& t = store.at(name);
    const Tensor& g = analytic.at(name);
    for (std::size_t k = 0; k < t.size(); ++k) {
      double best = std::numeric_limits<double>::infinity();
      double best_numeric = 0.0;
      for (double step : {h, h / 10.0}) {
        const double x0 = t[k];
        t[k] = x0 + step;
        const double fp = f(store);
        t[k] = x0 - step;
        const double fm = f(store);
        t[k] = x0;
        const double numeric = (fp - fm) / (2.0 * step);
        const double err = relative_error(g[k], numeric, floor);
        if (err < best) {
          best = err;
          best_numeric = numeric;
        }
        if (best < 1e-6) break;
      }
      ++out.checked;
      if (best > out.max_rel_error) {
        out.max_rel_error = best;
        out.worst = name + "[" + std::to_string(k) + "]";
        out.worst_analytic = g[k];
        out.worst_numeric = best_numeric;
      }
    }
  }
  return out;
}

}  // namespace spin::testing
