#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spin/attention.hpp"
#include "spin/autodiff.hpp"
#include "spin/data.hpp"
#include "spin/encoding.hpp"
#include "spin/graph.hpp"
#include "spin/mlp.hpp"
#include "spin/parameters.hpp"

namespace spin {

enum class Variant { spin, spin_h };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

struct HubConfig {
  std::size_t count = 4;  // K
  std::size_t dim = 128;  // d_z
  bool per_node = false;  // one trainable base per node instead of a shared one
};

struct ModelConfig {
  Variant variant = Variant::spin;
  std::size_t layers = 4;  // L
  std::size_t eta = 3;     // layers with observed-only keys
  std::size_t hidden_dim = 32;  // d_h
  std::size_t mlp_hidden = 32;
  bool shared_readout = true;
  HubConfig hubs;
  EncodingConfig encoding;

  static ModelConfig spin_defaults();
  static ModelConfig spin_h_defaults();
  // Throws ValidationError for eta outside [1, layers] and zero sizes.
  void validate() const;
};

// Which keys a block may attend: observed positions only, or every step.
enum class KeyFilter { observed_only, all_steps };

// Edge contexts e(j->i, t) summed per destination row t * N + i, and the plan
// holding one (edge, step) set per context (edges by destination then source,
// steps ascending).
struct EdgeContexts {
  Value summed;
  AttentionPlan plan;
};

struct LayerTrace {
  KeyFilter filter = KeyFilter::observed_only;
  AttentionStats stats;
};

// Everything recorded by one forward pass. Rows follow the window layout
// t * N + i; layer_outputs[l] holds the readout after layer l + 1.
struct ForwardPass {
  std::vector<Value> states;  // H(0) .. H(L), each [W*N, d_h]
  std::vector<Value> layer_outputs;
  std::vector<LayerTrace> layers;
  Value observed;  // observed values fed to the network, [n_obs, 1]
  std::vector<std::size_t> observed_rows;

  std::uint64_t pairs_in_layer(std::size_t l) const { return layers.at(l).stats.pairs; }
};

struct ImputationOutput {
  std::size_t steps = 0;
  std::size_t nodes = 0;
  std::vector<std::vector<double>> layers;  // per-layer predictions, row-major (t, i)

  const std::vector<double>& final_layer() const { return layers.back(); }
};

// The SPIN imputation network and its hierarchical variant. The model owns
// no parameter values; every entry point takes them explicitly so replicas
// and tests can run on copies.
class SpinModel {
 public:
  SpinModel(ModelConfig config, std::size_t node_count);

  const ModelConfig& config() const { return config_; }
  std::size_t node_count() const { return node_count_; }
  const PositionalEncoder& encoder() const { return encoder_; }

  ParameterStore initialize(std::uint64_t seed) const;

  // Runs the full stack on a window; the model reads values only where
  // window.mask == 1. With input_gradients the observed values become a
  // differentiable leaf (ForwardPass::observed).
  ForwardPass forward(BoundParameters& params, const SpatioTemporalWindow& window,
                      const SensorGraph& graph, bool input_gradients = false) const;
  ImputationOutput impute(const ParameterStore& params, const SpatioTemporalWindow& window,
                          const SensorGraph& graph) const;

  // ---- building blocks, exposed for testing ------------------------------

  // H(0). When `observed` is given it receives the leaf holding the observed
  // values (rows in ascending t * N + i order), or an invalid Value if none.
  Value init_state(BoundParameters& params, const SpatioTemporalWindow& window,
                   Value* observed = nullptr, bool input_gradients = false) const;

  EdgeContexts cross_attention(BoundParameters& params, std::size_t layer, const Value& state,
                               const Mask& mask, const SensorGraph& graph, KeyFilter filter,
                               AttentionStats* stats = nullptr) const;
  Value self_attention(BoundParameters& params, std::size_t layer, const Value& state,
                       const Mask& mask, KeyFilter filter, AttentionStats* stats = nullptr) const;
  Value layer_update(BoundParameters& params, std::size_t layer, const Value& state,
                     const Value& self_context, const Value& neighbor_context) const;
  Value readout(BoundParameters& params, std::size_t layer, const Value& state) const;

  // Hierarchical blocks. Hub rows are i * K + k.
  Value initial_hubs(BoundParameters& params, const SpatioTemporalWindow& window) const;
  Value hub_update(BoundParameters& params, std::size_t layer, const Value& state,
                   const Value& hubs, const Mask& mask, KeyFilter filter,
                   AttentionStats* stats = nullptr) const;
  struct HubContexts {
    Value self_context;
    EdgeContexts neighbor;
  };
  HubContexts node_update_from_hubs(BoundParameters& params, std::size_t layer,
                                    const Value& state, const Value& hubs,
                                    const SensorGraph& graph, std::size_t steps,
                                    AttentionStats* stats = nullptr) const;

  // Parameter names of the per-layer blocks.
  std::string block_prefix(std::size_t layer, const char* block) const;
  std::string score_name(std::size_t layer, const char* block) const;

 private:
  struct MessageBlock {
    Mlp message;
    std::string score;
  };

  MessageBlock block(std::size_t layer, const char* name, std::size_t key_dim,
                     std::size_t query_dim, std::size_t out_dim) const;
  Value run_block(BoundParameters& params, const MessageBlock& block, const Value& key_features,
                  const Value& query_features, const AttentionPlan& plan,
                  AttentionStats* stats, std::optional<std::size_t> sum_rows = {}) const;
  void initialize_block(ParameterStore& store, const MessageBlock& block,
                        std::mt19937_64& rng) const;
  Mlp update_mlp(std::size_t layer) const;
  Mlp hub_state_mlp(std::size_t layer) const;
  Mlp readout_mlp(std::size_t layer) const;
  Mlp init_target_mlp() const;
  Mlp init_observed_mlp() const;

  ModelConfig config_;
  std::size_t node_count_;
  PositionalEncoder encoder_;
};

// Sets over the steps of each node: query (t, i) attends (s, i).
AttentionPlan temporal_plan(const Mask& mask, KeyFilter filter);
// Sets over each edge (j, i) and step t: query (t, i) attends (s, j).
AttentionPlan edge_plan(const Mask& mask, const SensorGraph& graph, KeyFilter filter);

}  // namespace spin
