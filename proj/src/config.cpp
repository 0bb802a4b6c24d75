#include "spin/config.hpp"

#include <fstream>
#include <set>

#include "spin/errors.hpp"

namespace spin {

using nlohmann::json;

namespace {

const json kEmpty = json::object();

const json& section(const json& doc, const char* name) {
  if (!doc.contains(name)) return kEmpty;
  const json& s = doc.at(name);
  if (!s.is_object()) throw ValidationError(std::string("config section '") + name + "' must be an object");
  return s;
}

void require_known(const json& obj, const std::string& where, std::set<std::string> known) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) throw ValidationError("unknown config key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config key '" + where + "." + key + "' has the wrong type");
  }
}

template <typename T>
void read(const json& obj, const char* key, std::optional<T>& out, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  T value{};
  read(obj, key, value, where);
  out = value;
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

void read_path(const json& obj, const char* key, std::optional<std::filesystem::path>& out,
               const std::string& where, const std::filesystem::path& base) {
  std::optional<std::string> s;
  read(obj, key, s, where);
  if (s) out = resolve(*s, base);
}

json optional_path(const std::optional<std::filesystem::path>& p) {
  return p ? json(p->string()) : json(nullptr);
}

template <typename T>
json optional_value(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

std::string to_string(InjectPolicy policy) {
  switch (policy) {
    case InjectPolicy::none: return "none";
    case InjectPolicy::point: return "point";
    case InjectPolicy::block: return "block";
    case InjectPolicy::sweep: return "sweep";
  }
  return "none";
}

InjectPolicy parse_policy(const std::string& name) {
  if (name == "none") return InjectPolicy::none;
  if (name == "point") return InjectPolicy::point;
  if (name == "block") return InjectPolicy::block;
  if (name == "sweep") return InjectPolicy::sweep;
  throw ValidationError("unknown injection policy '" + name + "' (expected point, block, sweep or none)");
}

RunConfig RunConfig::from_json(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ValidationError("run config must be a JSON object");
  require_known(doc, "config", {"data", "model", "train", "inject", "output", "synth", "benchmark"});
  RunConfig c;

  const json& d = section(doc, "data");
  require_known(d, "data", {"values_csv", "mask_csv", "eval_mask_csv", "distances_csv", "edges_csv",
                            "gamma", "delta", "W", "stride", "split"});
  std::string values;
  read(d, "values_csv", values, "data");
  c.data.values_csv = resolve(values, base_dir);
  read_path(d, "mask_csv", c.data.mask_csv, "data", base_dir);
  read_path(d, "eval_mask_csv", c.data.eval_mask_csv, "data", base_dir);
  read_path(d, "distances_csv", c.data.distances_csv, "data", base_dir);
  read_path(d, "edges_csv", c.data.edges_csv, "data", base_dir);
  read(d, "gamma", c.data.gamma, "data");
  read(d, "delta", c.data.delta, "data");
  read(d, "W", c.data.window, "data");
  read(d, "stride", c.data.stride, "data");
  const json& split = section(d, "split");
  require_known(split, "data.split", {"train", "validation"});
  read(split, "train", c.data.train_fraction, "data.split");
  read(split, "validation", c.data.validation_fraction, "data.split");

  const json& m = section(doc, "model");
  require_known(m, "model", {"variant", "L", "eta", "d_h", "mlp_hidden", "shared_readout", "hubs",
                             "encoding"});
  std::string variant = "spin";
  read(m, "variant", variant, "model");
  c.model = parse_variant(variant) == Variant::spin ? ModelConfig::spin_defaults()
                                                    : ModelConfig::spin_h_defaults();
  read(m, "L", c.model.layers, "model");
  read(m, "eta", c.model.eta, "model");
  read(m, "d_h", c.model.hidden_dim, "model");
  read(m, "mlp_hidden", c.model.mlp_hidden, "model");
  read(m, "shared_readout", c.model.shared_readout, "model");
  const json& hubs = section(m, "hubs");
  require_known(hubs, "model.hubs", {"K", "d_z", "per_node_hubs"});
  read(hubs, "K", c.model.hubs.count, "model.hubs");
  read(hubs, "d_z", c.model.hubs.dim, "model.hubs");
  read(hubs, "per_node_hubs", c.model.hubs.per_node, "model.hubs");
  const json& enc = section(m, "encoding");
  require_known(enc, "model.encoding", {"periods", "d_v", "d_q", "hidden", "identity_fusion"});
  read(enc, "periods", c.model.encoding.periods, "model.encoding");
  read(enc, "d_v", c.model.encoding.spatial_dim, "model.encoding");
  read(enc, "d_q", c.model.encoding.output_dim, "model.encoding");
  read(enc, "hidden", c.model.encoding.hidden, "model.encoding");
  read(enc, "identity_fusion", c.model.encoding.identity_fusion, "model.encoding");

  const json& t = section(doc, "train");
  require_known(t, "train", {"epochs_max", "batches_per_epoch", "batch_size", "patience", "lr",
                             "warmup", "restart_period", "seed", "subsample", "clip_norm",
                             "validation_seed"});
  read(t, "epochs_max", c.train.epochs_max, "train");
  read(t, "batches_per_epoch", c.train.batches_per_epoch, "train");
  read(t, "batch_size", c.train.batch_size, "train");
  read(t, "patience", c.train.patience, "train");
  read(t, "lr", c.train.lr, "train");
  read(t, "warmup", c.train.warmup, "train");
  read(t, "restart_period", c.train.restart_period, "train");
  read(t, "seed", c.train.seed, "train");
  read(t, "clip_norm", c.train.clip_norm, "train");
  read(t, "validation_seed", c.train.validation_seed, "train");
  if (t.contains("subsample") && !t.at("subsample").is_null()) {
    const json& s = section(t, "subsample");
    require_known(s, "train.subsample", {"n", "k"});
    SubsampleConfig sub;
    read(s, "n", sub.seeds, "train.subsample");
    read(s, "k", sub.hops, "train.subsample");
    c.train.subsample = sub;
  }
  c.train.window = c.data.window;

  const json& inj = section(doc, "inject");
  require_known(inj, "inject", {"policy", "params", "seed"});
  std::string policy = "none";
  read(inj, "policy", policy, "inject");
  c.inject.policy = parse_policy(policy);
  read(inj, "seed", c.inject.seed, "inject");
  const json& p = section(inj, "params");
  require_known(p, "inject.params", {"rate", "p", "point_rate", "failure_prob", "len_min", "len_max"});
  read(p, "rate", c.inject.rate, "inject.params");
  read(p, "p", c.inject.p, "inject.params");
  read(p, "point_rate", c.inject.block.point_rate, "inject.params");
  read(p, "failure_prob", c.inject.block.failure_prob, "inject.params");
  read(p, "len_min", c.inject.block.len_min, "inject.params");
  read(p, "len_max", c.inject.block.len_max, "inject.params");

  const json& out = section(doc, "output");
  require_known(out, "output", {"dir"});
  std::string dir = "out";
  read(out, "dir", dir, "output");
  c.output_dir = resolve(dir, base_dir);

  const json& s = section(doc, "synth");
  require_known(s, "synth", {"nodes", "steps", "periods", "radius", "gamma", "diffusion",
                             "diffusion_rounds", "drift_scale", "drift_decay", "noise", "seed"});
  read(s, "nodes", c.synth.nodes, "synth");
  read(s, "steps", c.synth.steps, "synth");
  read(s, "periods", c.synth.periods, "synth");
  read(s, "radius", c.synth.radius, "synth");
  read(s, "gamma", c.synth.gamma, "synth");
  read(s, "diffusion", c.synth.diffusion, "synth");
  read(s, "diffusion_rounds", c.synth.diffusion_rounds, "synth");
  read(s, "drift_scale", c.synth.drift_scale, "synth");
  read(s, "drift_decay", c.synth.drift_decay, "synth");
  read(s, "noise", c.synth.noise, "synth");
  read(s, "seed", c.synth.seed, "synth");

  const json& b = section(doc, "benchmark");
  require_known(b, "benchmark", {"windows", "nodes", "radius", "missing_rate", "repeats", "seed"});
  read(b, "windows", c.benchmark.windows, "benchmark");
  read(b, "nodes", c.benchmark.nodes, "benchmark");
  read(b, "radius", c.benchmark.radius, "benchmark");
  read(b, "missing_rate", c.benchmark.missing_rate, "benchmark");
  read(b, "repeats", c.benchmark.repeats, "benchmark");
  read(b, "seed", c.benchmark.seed, "benchmark");
  c.benchmark.spin = c.model.variant == Variant::spin ? c.model : ModelConfig::spin_defaults();
  c.benchmark.spin_h = c.model.variant == Variant::spin_h ? c.model : ModelConfig::spin_h_defaults();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(doc, path.parent_path());
}

json RunConfig::to_json() const {
  json doc;
  doc["data"] = {{"values_csv", data.values_csv.string()},
                 {"mask_csv", optional_path(data.mask_csv)},
                 {"eval_mask_csv", optional_path(data.eval_mask_csv)},
                 {"distances_csv", optional_path(data.distances_csv)},
                 {"edges_csv", optional_path(data.edges_csv)},
                 {"gamma", optional_value(data.gamma)},
                 {"delta", optional_value(data.delta)},
                 {"W", data.window},
                 {"stride", data.stride},
                 {"split", {{"train", data.train_fraction}, {"validation", data.validation_fraction}}}};
  doc["model"] = {{"variant", spin::to_string(model.variant)},
                  {"L", model.layers},
                  {"eta", model.eta},
                  {"d_h", model.hidden_dim},
                  {"mlp_hidden", model.mlp_hidden},
                  {"shared_readout", model.shared_readout},
                  {"hubs", {{"K", model.hubs.count}, {"d_z", model.hubs.dim},
                            {"per_node_hubs", model.hubs.per_node}}},
                  {"encoding", {{"periods", model.encoding.periods},
                                {"d_v", model.encoding.spatial_dim},
                                {"d_q", model.encoding.output_dim},
                                {"hidden", model.encoding.hidden},
                                {"identity_fusion", model.encoding.identity_fusion}}}};
  doc["train"] = {{"epochs_max", train.epochs_max},
                  {"batches_per_epoch", train.batches_per_epoch},
                  {"batch_size", train.batch_size},
                  {"patience", train.patience},
                  {"lr", train.lr},
                  {"warmup", train.warmup},
                  {"restart_period", train.restart_period},
                  {"seed", train.seed},
                  {"clip_norm", train.clip_norm},
                  {"validation_seed", train.validation_seed},
                  {"subsample", train.subsample ? json{{"n", train.subsample->seeds},
                                                       {"k", train.subsample->hops}}
                                                : json(nullptr)}};
  doc["inject"] = {{"policy", spin::to_string(inject.policy)},
                   {"seed", inject.seed},
                   {"params", {{"rate", inject.rate},
                               {"p", inject.p},
                               {"point_rate", inject.block.point_rate},
                               {"failure_prob", inject.block.failure_prob},
                               {"len_min", inject.block.len_min},
                               {"len_max", inject.block.len_max}}}};
  doc["output"] = {{"dir", output_dir.string()}};
  doc["synth"] = {{"nodes", synth.nodes},
                  {"steps", synth.steps},
                  {"periods", synth.periods},
                  {"radius", synth.radius},
                  {"gamma", synth.gamma},
                  {"diffusion", synth.diffusion},
                  {"diffusion_rounds", synth.diffusion_rounds},
                  {"drift_scale", synth.drift_scale},
                  {"drift_decay", synth.drift_decay},
                  {"noise", synth.noise},
                  {"seed", synth.seed}};
  doc["benchmark"] = {{"windows", benchmark.windows},
                      {"nodes", benchmark.nodes},
                      {"radius", benchmark.radius},
                      {"missing_rate", benchmark.missing_rate},
                      {"repeats", benchmark.repeats},
                      {"seed", benchmark.seed}};
  return doc;
}

void RunConfig::validate() const {
  if (data.values_csv.empty()) throw ValidationError("data.values_csv is required");
  if (data.distances_csv.has_value() == data.edges_csv.has_value()) {
    throw ValidationError("give exactly one of data.distances_csv and data.edges_csv");
  }
  if (data.distances_csv && (!data.gamma || !data.delta)) {
    throw ValidationError("data.distances_csv needs data.gamma and data.delta");
  }
  if (data.window == 0 || data.stride == 0) throw ValidationError("data.W and data.stride must be positive");
  if (!(data.train_fraction > 0.0) || data.validation_fraction < 0.0 ||
      data.train_fraction + data.validation_fraction >= 1.0) {
    throw ValidationError("data.split fractions must be positive and leave room for a test range");
  }
  model.validate();
  train.validate();
}

std::vector<std::string> RunConfig::warnings() const {
  std::vector<std::string> out;
  if (model.variant == Variant::spin_h && model.hubs.count >= data.window) {
    out.push_back("model.hubs.K = " + std::to_string(model.hubs.count) +
                  " is not smaller than the window length " + std::to_string(data.window));
  }
  return out;
}

Injection run_injection(const InjectSection& inject, const Mask& mask) {
  switch (inject.policy) {
    case InjectPolicy::none: return Injection{mask, Mask(mask.steps, mask.nodes)};
    case InjectPolicy::point: return inject_point_missing(mask, inject.rate, inject.seed);
    case InjectPolicy::block: return inject_block_missing(mask, inject.block, inject.seed);
    case InjectPolicy::sweep: return inject_sparsity_sweep(mask, inject.p, inject.seed);
  }
  throw ValidationError("unknown injection policy");
}

SensorGraph load_graph(const DataSection& data, std::size_t node_count) {
  if (data.edges_csv) return read_edge_csv(*data.edges_csv, node_count);
  if (!data.distances_csv) throw ValidationError("no graph source configured");
  const Tensor dist = read_distance_csv(*data.distances_csv);
  if (dist.rows() != node_count) {
    throw ValidationError("distance matrix has " + std::to_string(dist.rows()) +
                          " rows but the data has " + std::to_string(node_count) + " sensors");
  }
  return build_adjacency_gaussian(dist, data.gamma.value(), data.delta.value());
}

PreparedData prepare_data(const RunConfig& config) {
  config.validate();
  PreparedData out;
  out.raw = load_dataset(config.data.values_csv, config.data.mask_csv, config.data.eval_mask_csv);
  if (!config.data.eval_mask_csv && config.inject.policy != InjectPolicy::none) {
    out.raw = apply_injection(out.raw, run_injection(config.inject, out.raw.mask));
  }
  out.split = split_sequential(out.raw.steps, config.data.train_fraction,
                               config.data.validation_fraction);
  out.normalized = normalize(out.raw, out.split.train);
  out.graph = load_graph(config.data, out.raw.nodes);
  return out;
}

}  // namespace spin
