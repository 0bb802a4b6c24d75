#include "spin/model.hpp"

#include <cmath>

#include "spin/errors.hpp"

namespace spin {

std::string to_string(Variant v) { return v == Variant::spin ? "spin" : "spin-h"; }

Variant parse_variant(const std::string& name) {
  if (name == "spin") return Variant::spin;
  if (name == "spin-h") return Variant::spin_h;
  throw ValidationError("unknown model variant '" + name + "' (expected spin or spin-h)");
}

ModelConfig ModelConfig::spin_defaults() { return ModelConfig{}; }

ModelConfig ModelConfig::spin_h_defaults() {
  ModelConfig c;
  c.variant = Variant::spin_h;
  c.layers = 5;
  c.eta = 3;
  return c;
}

void ModelConfig::validate() const {
  if (layers == 0) throw ValidationError("model needs at least one layer");
  if (eta < 1 || eta > layers) {
    throw ValidationError("eta must lie in [1, " + std::to_string(layers) + "], got " +
                          std::to_string(eta));
  }
  if (hidden_dim == 0 || mlp_hidden == 0) throw ValidationError("model widths must be positive");
  if (variant == Variant::spin_h && (hubs.count == 0 || hubs.dim == 0)) {
    throw ValidationError("hub count and width must be positive");
  }
  encoding.validate();
}

// --------------------------------------------------------------------------- plans

AttentionPlan temporal_plan(const Mask& mask, KeyFilter filter) {
  const std::size_t W = mask.steps;
  const std::size_t N = mask.nodes;
  std::vector<std::vector<std::size_t>> keys(N);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t s = 0; s < W; ++s) {
      if (filter == KeyFilter::all_steps || mask.at(s, i)) keys[i].push_back(s * N + i);
    }
  }
  AttentionPlan plan;
  for (std::size_t t = 0; t < W; ++t) {
    for (std::size_t i = 0; i < N; ++i) plan.add_set(t * N + i, keys[i]);
  }
  return plan;
}

AttentionPlan edge_plan(const Mask& mask, const SensorGraph& graph, KeyFilter filter) {
  const std::size_t W = mask.steps;
  const std::size_t N = mask.nodes;
  AttentionPlan plan;
  std::vector<std::size_t> keys;
  for (const Edge& e : graph.edges()) {
    keys.clear();
    for (std::size_t s = 0; s < W; ++s) {
      if (filter == KeyFilter::all_steps || mask.at(s, e.src)) keys.push_back(s * N + e.src);
    }
    for (std::size_t t = 0; t < W; ++t) plan.add_set(t * N + e.dst, keys);
  }
  return plan;
}

namespace {

// Sets per (i, k): hub k of node i attends the steps of node i.
AttentionPlan hub_gather_plan(const Mask& mask, std::size_t hubs, KeyFilter filter) {
  const std::size_t W = mask.steps;
  const std::size_t N = mask.nodes;
  AttentionPlan plan;
  std::vector<std::size_t> keys;
  for (std::size_t i = 0; i < N; ++i) {
    keys.clear();
    for (std::size_t t = 0; t < W; ++t) {
      if (filter == KeyFilter::all_steps || mask.at(t, i)) keys.push_back(t * N + i);
    }
    for (std::size_t k = 0; k < hubs; ++k) plan.add_set(i * hubs + k, keys);
  }
  return plan;
}

// Sets per (t, i): position (t, i) attends the K hubs of node i.
AttentionPlan hub_self_plan(std::size_t steps, std::size_t nodes, std::size_t hubs) {
  AttentionPlan plan;
  std::vector<std::size_t> keys(hubs);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < nodes; ++i) {
      for (std::size_t k = 0; k < hubs; ++k) keys[k] = i * hubs + k;
      plan.add_set(t * nodes + i, keys);
    }
  }
  return plan;
}

// Sets per (edge j->i, t): position (t, i) attends the K hubs of node j.
AttentionPlan hub_edge_plan(std::size_t steps, std::size_t nodes, std::size_t hubs,
                            const SensorGraph& graph) {
  AttentionPlan plan;
  std::vector<std::size_t> keys(hubs);
  for (const Edge& e : graph.edges()) {
    for (std::size_t k = 0; k < hubs; ++k) keys[k] = e.src * hubs + k;
    for (std::size_t t = 0; t < steps; ++t) plan.add_set(t * nodes + e.dst, keys);
  }
  return plan;
}

void check_window(const SpatioTemporalWindow& window) {
  const std::size_t R = window.steps * window.nodes;
  if (window.mask.steps != window.steps || window.mask.nodes != window.nodes ||
      window.values.size() != R || window.step_index.size() != window.steps ||
      window.node_ids.size() != window.nodes) {
    throw DimensionError("window fields disagree with its " + std::to_string(window.steps) + "x" +
                         std::to_string(window.nodes) + " shape");
  }
}

}  // namespace

// --------------------------------------------------------------------------- model

SpinModel::SpinModel(ModelConfig config, std::size_t node_count)
    : config_(std::move(config)), node_count_(node_count) {
  config_.validate();
  if (node_count_ == 0) throw ValidationError("model needs at least one node");
  encoder_ = PositionalEncoder(config_.encoding, node_count_);
}

std::string SpinModel::block_prefix(std::size_t layer, const char* block) const {
  return "layer" + std::to_string(layer) + "." + block;
}

std::string SpinModel::score_name(std::size_t layer, const char* block) const {
  return block_prefix(layer, block) + ".score";
}

SpinModel::MessageBlock SpinModel::block(std::size_t layer, const char* name,
                                         std::size_t key_dim, std::size_t query_dim,
                                         std::size_t out_dim) const {
  return MessageBlock{
      Mlp(block_prefix(layer, name) + ".msg",
          MlpSpec::two_layer(key_dim + query_dim, config_.mlp_hidden, out_dim)),
      score_name(layer, name)};
}

Mlp SpinModel::update_mlp(std::size_t layer) const {
  const std::size_t d = config_.hidden_dim;
  return Mlp(block_prefix(layer, "update"), MlpSpec::two_layer(3 * d, config_.mlp_hidden, d));
}

Mlp SpinModel::hub_state_mlp(std::size_t layer) const {
  const std::size_t dz = config_.hubs.dim;
  return Mlp(block_prefix(layer, "hub_state"), MlpSpec::two_layer(2 * dz, config_.mlp_hidden, dz));
}

Mlp SpinModel::readout_mlp(std::size_t layer) const {
  const std::string prefix = config_.shared_readout ? "readout" : block_prefix(layer, "readout");
  return Mlp(prefix, MlpSpec::two_layer(config_.hidden_dim, config_.mlp_hidden, 1));
}

Mlp SpinModel::init_target_mlp() const {
  return Mlp("init.target", MlpSpec::two_layer(config_.encoding.output_dim, config_.mlp_hidden,
                                               config_.hidden_dim));
}

Mlp SpinModel::init_observed_mlp() const {
  return Mlp("init.observed", MlpSpec::two_layer(1 + config_.encoding.output_dim,
                                                 config_.mlp_hidden, config_.hidden_dim));
}

void SpinModel::initialize_block(ParameterStore& store, const MessageBlock& b,
                                 std::mt19937_64& rng) const {
  b.message.initialize(store, rng);
  const std::size_t out = b.message.spec().output_width();
  store.add(b.score, uniform_init(Shape{out, 1}, out, rng));
}

ParameterStore SpinModel::initialize(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  ParameterStore store;
  encoder_.initialize(store, rng);
  init_target_mlp().initialize(store, rng);
  init_observed_mlp().initialize(store, rng);
  const std::size_t d = config_.hidden_dim;
  const std::size_t dz = config_.hubs.dim;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    if (config_.variant == Variant::spin) {
      initialize_block(store, block(l, "cross", d, d, d), rng);
      initialize_block(store, block(l, "self", d, d, d), rng);
    } else {
      initialize_block(store, block(l, "hub", d, dz, dz), rng);
      hub_state_mlp(l).initialize(store, rng);
      initialize_block(store, block(l, "hub_self", dz, d, d), rng);
      initialize_block(store, block(l, "hub_cross", dz, d, d), rng);
    }
    update_mlp(l).initialize(store, rng);
    if (!config_.shared_readout) readout_mlp(l).initialize(store, rng);
  }
  if (config_.shared_readout) readout_mlp(0).initialize(store, rng);
  if (config_.variant == Variant::spin_h) {
    const std::size_t rows = config_.hubs.per_node ? node_count_ * config_.hubs.count
                                                   : config_.hubs.count;
    store.add("hubs.base", uniform_init(Shape{rows, dz}, dz, rng));
  }
  return store;
}

Value SpinModel::run_block(BoundParameters& params, const MessageBlock& b,
                           const Value& key_features, const Value& query_features,
                           const AttentionPlan& plan, AttentionStats* stats,
                           std::optional<std::size_t> sum_rows) const {
  const Mlp& mlp = b.message;
  const std::size_t key_dim = key_features.data().cols();
  const std::size_t query_dim = query_features.data().cols();
  if (key_dim + query_dim != mlp.spec().input_width()) {
    throw DimensionError("message block '" + mlp.prefix() + "' expects " +
                         std::to_string(mlp.spec().input_width()) + " features, got " +
                         std::to_string(key_dim) + " + " + std::to_string(query_dim));
  }
  const Value w1 = params(mlp.weight_name(0));
  const Value b1 = params(mlp.bias_name(0));
  const Value w2 = params(mlp.weight_name(1));
  const Value b2 = params(mlp.bias_name(1));
  const Value w_alpha = params(b.score);
  const std::size_t out_dim = mlp.spec().output_width();

  // First layer of MLP([key, query]) split into its key and query halves.
  const Value keys = matmul(key_features, slice_rows(w1, 0, key_dim));
  const Value queries =
      add_row_vector(matmul(query_features, slice_rows(w1, key_dim, key_dim + query_dim)), b1);
  // Logit r . w = (W2 w) . z + b2 . w
  const Value score = matmul(w2, w_alpha);
  const Value offset = matmul(reshape(b2, Shape{1, out_dim}), w_alpha);
  const Value pooled = attend(keys, queries, score, offset, plan, stats);
  // Empty message sets contribute a zero context.
  if (!sum_rows) return scale_rows(linear(pooled, w2, b2), plan.nonempty_indicator());
  // Contexts summed per query row: W2 (sum of pooled) + (non-empty sets) * b2.
  Tensor counts(Shape{*sum_rows, 1});
  const std::vector<double> nonempty = plan.nonempty_indicator();
  for (std::size_t s = 0; s < plan.set_count(); ++s) counts[plan.query_row[s]] += nonempty[s];
  const Value summed = scatter_add_rows(pooled, plan.query_row, *sum_rows);
  return add(matmul(summed, w2),
             matmul(params.tape().constant(std::move(counts)), reshape(b2, Shape{1, out_dim})));
}

Value SpinModel::init_state(BoundParameters& params, const SpatioTemporalWindow& window,
                            Value* observed_out, bool input_gradients) const {
  check_window(window);
  const std::size_t R = window.steps * window.nodes;
  const Value q = encoder_.encode(params, window.step_index, window.node_ids);
  std::vector<std::size_t> observed;
  std::vector<std::size_t> target;
  for (std::size_t k = 0; k < R; ++k) (window.mask.bits[k] ? observed : target).push_back(k);

  std::vector<Value> parts;
  if (!observed.empty()) {
    Tensor x(Shape{observed.size(), 1});
    for (std::size_t r = 0; r < observed.size(); ++r) {
      const double v = window.values[observed[r]];
      if (!std::isfinite(v)) {
        throw ValidationError("observed entry (" + std::to_string(observed[r] / window.nodes) +
                              "," + std::to_string(observed[r] % window.nodes) +
                              ") has no finite value");
      }
      x[r] = v;
    }
    const Value x_leaf = params.tape().leaf(std::move(x), input_gradients);
    if (observed_out != nullptr) *observed_out = x_leaf;
    const Value inputs[] = {x_leaf, gather_rows(q, observed)};
    parts.push_back(scatter_add_rows(init_observed_mlp().apply(params, inputs), observed, R));
  }
  if (!target.empty()) {
    parts.push_back(
        scatter_add_rows(init_target_mlp().apply(params, gather_rows(q, target)), target, R));
  }
  return parts.size() == 1 ? parts.front() : add(parts[0], parts[1]);
}

EdgeContexts SpinModel::cross_attention(BoundParameters& params, std::size_t layer,
                                        const Value& state, const Mask& mask,
                                        const SensorGraph& graph, KeyFilter filter,
                                        AttentionStats* stats) const {
  if (graph.node_count() != mask.nodes) {
    throw DimensionError("graph has " + std::to_string(graph.node_count()) +
                         " nodes, window has " + std::to_string(mask.nodes));
  }
  const std::size_t d = config_.hidden_dim;
  EdgeContexts out;
  out.plan = edge_plan(mask, graph, filter);
  out.summed = run_block(params, block(layer, "cross", d, d, d), state, state, out.plan, stats,
                         mask.steps * mask.nodes);
  return out;
}

Value SpinModel::self_attention(BoundParameters& params, std::size_t layer, const Value& state,
                                const Mask& mask, KeyFilter filter,
                                AttentionStats* stats) const {
  const std::size_t d = config_.hidden_dim;
  const AttentionPlan plan = temporal_plan(mask, filter);
  return run_block(params, block(layer, "self", d, d, d), state, state, plan, stats);
}

Value SpinModel::layer_update(BoundParameters& params, std::size_t layer, const Value& state,
                              const Value& self_context, const Value& neighbor_context) const {
  const Value inputs[] = {state, self_context, neighbor_context};
  return update_mlp(layer).apply(params, inputs);
}

Value SpinModel::readout(BoundParameters& params, std::size_t layer, const Value& state) const {
  return readout_mlp(layer).apply(params, state);
}

Value SpinModel::initial_hubs(BoundParameters& params, const SpatioTemporalWindow& window) const {
  const std::size_t K = config_.hubs.count;
  std::vector<std::size_t> rows;
  rows.reserve(window.nodes * K);
  for (std::size_t i = 0; i < window.nodes; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      if (config_.hubs.per_node) {
        if (window.node_ids[i] >= node_count_) {
          throw ValidationError("node " + std::to_string(window.node_ids[i]) + " has no hubs");
        }
        rows.push_back(window.node_ids[i] * K + k);
      } else {
        rows.push_back(k);
      }
    }
  }
  return gather_rows(params("hubs.base"), rows);
}

Value SpinModel::hub_update(BoundParameters& params, std::size_t layer, const Value& state,
                            const Value& hubs, const Mask& mask, KeyFilter filter,
                            AttentionStats* stats) const {
  const std::size_t d = config_.hidden_dim;
  const std::size_t dz = config_.hubs.dim;
  const AttentionPlan plan = hub_gather_plan(mask, config_.hubs.count, filter);
  const Value context = run_block(params, block(layer, "hub", d, dz, dz), state, hubs, plan, stats);
  const Value inputs[] = {hubs, context};
  return hub_state_mlp(layer).apply(params, inputs);
}

SpinModel::HubContexts SpinModel::node_update_from_hubs(BoundParameters& params, std::size_t layer,
                                                        const Value& state, const Value& hubs,
                                                        const SensorGraph& graph,
                                                        std::size_t steps,
                                                        AttentionStats* stats) const {
  const std::size_t d = config_.hidden_dim;
  const std::size_t dz = config_.hubs.dim;
  const std::size_t K = config_.hubs.count;
  const std::size_t N = graph.node_count();
  HubContexts out;
  const AttentionPlan self_plan = hub_self_plan(steps, N, K);
  out.self_context = run_block(params, block(layer, "hub_self", dz, d, d), hubs, state, self_plan,
                               stats);
  out.neighbor.plan = hub_edge_plan(steps, N, K, graph);
  out.neighbor.summed = run_block(params, block(layer, "hub_cross", dz, d, d), hubs, state,
                                  out.neighbor.plan, stats, steps * N);
  return out;
}

ForwardPass SpinModel::forward(BoundParameters& params, const SpatioTemporalWindow& window,
                               const SensorGraph& graph, bool input_gradients) const {
  check_window(window);
  if (graph.node_count() != window.nodes) {
    throw DimensionError("graph has " + std::to_string(graph.node_count()) +
                         " nodes, window has " + std::to_string(window.nodes));
  }
  ForwardPass pass;
  Value state = init_state(params, window, &pass.observed, input_gradients);
  for (std::size_t k = 0; k < window.mask.bits.size(); ++k) {
    if (window.mask.bits[k]) pass.observed_rows.push_back(k);
  }
  pass.states.push_back(state);
  Value hubs;
  if (config_.variant == Variant::spin_h) hubs = initial_hubs(params, window);

  for (std::size_t l = 0; l < config_.layers; ++l) {
    LayerTrace trace;
    trace.filter = l < config_.eta ? KeyFilter::observed_only : KeyFilter::all_steps;
    if (config_.variant == Variant::spin) {
      const Value self_ctx = self_attention(params, l, state, window.mask, trace.filter,
                                            &trace.stats);
      const EdgeContexts cross =
          cross_attention(params, l, state, window.mask, graph, trace.filter, &trace.stats);
      state = layer_update(params, l, state, self_ctx, cross.summed);
    } else {
      const Value updated =
          hub_update(params, l, state, hubs, window.mask, trace.filter, &trace.stats);
      const HubContexts ctx =
          node_update_from_hubs(params, l, state, updated, graph, window.steps, &trace.stats);
      state = layer_update(params, l, state, ctx.self_context, ctx.neighbor.summed);
      hubs = updated;
    }
    pass.states.push_back(state);
    pass.layer_outputs.push_back(readout(params, l, state));
    pass.layers.push_back(trace);
  }
  return pass;
}

ImputationOutput SpinModel::impute(const ParameterStore& params,
                                   const SpatioTemporalWindow& window,
                                   const SensorGraph& graph) const {
  Tape tape;
  BoundParameters bound(tape, params, /*requires_grad=*/false);
  const ForwardPass pass = forward(bound, window, graph);
  ImputationOutput out;
  out.steps = window.steps;
  out.nodes = window.nodes;
  for (const Value& y : pass.layer_outputs) {
    out.layers.emplace_back(y.data().values().begin(), y.data().values().end());
  }
  return out;
}

}  // namespace spin
