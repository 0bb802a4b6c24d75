// Command-line entry point: synth | inject | train | impute | evaluate | benchmark.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "spin/benchmark.hpp"
#include "spin/config.hpp"
#include "spin/csv.hpp"
#include "spin/errors.hpp"
#include "spin/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace spin;

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

fs::path prepare_output(const RunConfig& config, const std::string& command) {
  fs::create_directories(config.output_dir);
  json snapshot = config.to_json();
  snapshot["command"] = command;
  write_json(config.output_dir / (command + ".resolved.json"), snapshot);
  return config.output_dir;
}

json metrics_json(const EvaluationResult& r) {
  json per_node = json::array();
  for (double v : r.per_node) per_node.push_back(std::isfinite(v) ? json(v) : json(nullptr));
  return {{"mae", r.mae}, {"n_eval", r.n_eval}, {"per_window", r.per_window},
          {"per_node", per_node}};
}

ParameterStore load_checkpoint(const SpinModel& model, const fs::path& path) {
  ParameterStore params = ParameterStore::load(path);
  model.initialize(0).require_same_layout(params);
  return params;
}

int cmd_synth(const fs::path& out_dir, const std::string& config_path) {
  RunConfig base;
  if (!config_path.empty()) base = RunConfig::load(config_path);
  const SynthData synth = generate_synthetic(base.synth);
  fs::create_directories(out_dir);
  const Dataset& ds = synth.dataset;
  write_values_csv(out_dir / "values.csv", ds.steps, ds.nodes, ds.values, ds.sensor_ids);
  write_distance_csv(out_dir / "distances.csv", synth.distances);
  write_edge_csv(out_dir / "edges.csv", synth.graph);

  // Starter run config for the generated data.
  RunConfig run = base;
  run.data.values_csv = "values.csv";
  run.data.edges_csv = fs::path("edges.csv");
  run.data.distances_csv.reset();
  run.inject.policy = InjectPolicy::point;
  run.inject.rate = 0.25;
  run.train.epochs_max = 30;
  run.train.batches_per_epoch = 20;
  run.train.patience = 30;
  run.output_dir = "run";
  json doc = run.to_json();
  doc.erase("benchmark");
  write_json(out_dir / "config.json", doc);
  std::cout << "wrote " << ds.steps << " steps x " << ds.nodes << " sensors, "
            << synth.graph.edge_count() << " edges to " << out_dir.string() << '\n';
  return 0;
}

int cmd_inject(const RunConfig& config) {
  const fs::path out = prepare_output(config, "inject");
  const Dataset ds =
      load_dataset(config.data.values_csv, config.data.mask_csv, config.data.eval_mask_csv);
  const Injection inj = run_injection(config.inject, ds.mask);
  Mask eval = ds.eval_mask;
  for (std::size_t k = 0; k < eval.bits.size(); ++k) eval.bits[k] |= inj.eval_mask.bits[k];
  write_mask_csv(out / "mask.csv", inj.mask, ds.sensor_ids);
  write_mask_csv(out / "eval_mask.csv", eval, ds.sensor_ids);
  const std::size_t before = ds.mask.count();
  const std::size_t removed = inj.eval_mask.count();
  const json summary = {
      {"policy", to_string(config.inject.policy)},
      {"seed", config.inject.seed},
      {"visible_before", before},
      {"visible_after", inj.mask.count()},
      {"removed", removed},
      {"removed_fraction", before > 0 ? double(removed) / double(before) : 0.0},
      {"remaining_fraction", before > 0 ? double(inj.mask.count()) / double(before) : 0.0}};
  write_json(out / "inject_summary.json", summary);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_train(const RunConfig& config) {
  const fs::path out = prepare_output(config, "train");
  const PreparedData data = prepare_data(config);
  const SpinModel model(config.model, data.normalized.nodes);
  const TrainResult result =
      train(model, data.normalized, data.graph, data.split, config.train, [](const HistoryRow& r) {
        std::cerr << "epoch " << r.epoch << "  loss " << r.train_loss << "  val_mae " << r.val_mae
                  << "  lr " << r.lr << '\n';
      });
  result.best.save(out / "checkpoint.json");
  std::ofstream history(out / "history.csv");
  history << "epoch,train_loss,val_mae,lr\n";
  for (const HistoryRow& r : result.history) {
    history << r.epoch << ',' << csv::format_number(r.train_loss) << ','
            << csv::format_number(r.val_mae) << ',' << csv::format_number(r.lr) << '\n';
  }
  std::cout << "best epoch " << result.best_epoch << " of " << result.history.size()
            << (result.stopped_early ? " (early stop)" : "") << '\n';
  return 0;
}

int cmd_impute(const RunConfig& config, const fs::path& checkpoint, const std::string& out_file) {
  const fs::path out = prepare_output(config, "impute");
  const PreparedData data = prepare_data(config);
  const SpinModel model(config.model, data.normalized.nodes);
  const ParameterStore params = load_checkpoint(model, checkpoint);
  const std::vector<double> pred =
      impute_dataset(model, params, data.normalized, data.graph, config.data.window);
  const NormalizationStats stats = *data.normalized.stats;
  std::vector<double> grid(pred.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    grid[k] = data.raw.mask.bits[k] ? data.raw.values[k] : stats.invert(pred[k]);
  }
  const fs::path target = out_file.empty() ? out / "imputed.csv" : fs::path(out_file);
  const Mask all(data.raw.steps, data.raw.nodes, 1);
  write_values_csv(target, data.raw.steps, data.raw.nodes, grid, data.raw.sensor_ids, &all);
  std::cout << "wrote " << target.string() << '\n';
  return 0;
}

int cmd_evaluate(const RunConfig& config, const fs::path& checkpoint) {
  const fs::path out = prepare_output(config, "evaluate");
  const PreparedData data = prepare_data(config);
  const SpinModel model(config.model, data.normalized.nodes);
  const ParameterStore params = load_checkpoint(model, checkpoint);
  const Dataset& ds = data.normalized;
  const std::size_t W = config.data.window;
  const std::size_t stride = config.data.stride;
  const auto means = fit_node_means(ds, data.split.train);
  json doc;
  doc[to_string(config.model.variant)] =
      metrics_json(evaluate(model, params, ds, data.graph, data.split.test, W, stride));
  doc["mean"] = metrics_json(evaluate_imputer(
      [&](const SpatioTemporalWindow& w) { return baseline_mean(w, means); }, ds, data.split.test,
      W, stride));
  doc["knn"] = metrics_json(evaluate_imputer(
      [&](const SpatioTemporalWindow& w) { return baseline_knn(w, data.graph, means); }, ds,
      data.split.test, W, stride));
  write_json(out / "metrics.json", doc);
  for (const auto& [name, m] : doc.items()) {
    std::cout << name << " mae " << m.at("mae").get<double>() << '\n';
  }
  return 0;
}

int cmd_benchmark(const RunConfig& config) {
  const fs::path out = prepare_output(config, "benchmark");
  const auto rows = run_complexity_benchmark(config.benchmark);
  json doc = json::array();
  std::ofstream table(out / "benchmark.csv");
  table << "variant,W,nodes,edges,pairs_total,expected_total,seconds\n";
  bool ok = true;
  for (const BenchmarkRow& r : rows) {
    std::uint64_t pairs = 0, expected = 0;
    for (auto p : r.pairs) pairs += p;
    for (auto e : r.expected) expected += e;
    ok = ok && r.counts_match();
    doc.push_back({{"variant", to_string(r.variant)}, {"W", r.window}, {"nodes", r.nodes},
                   {"edges", r.edges}, {"pairs_per_layer", r.pairs},
                   {"expected_per_layer", r.expected}, {"seconds", r.seconds},
                   {"counts_match", r.counts_match()}});
    table << to_string(r.variant) << ',' << r.window << ',' << r.nodes << ',' << r.edges << ','
          << pairs << ',' << expected << ',' << csv::format_number(r.seconds) << '\n';
    std::cout << to_string(r.variant) << " W=" << r.window << " pairs " << pairs << " ("
              << (r.counts_match() ? "matches" : "MISMATCH") << ") " << r.seconds << " s\n";
  }
  write_json(out / "benchmark.json", doc);
  if (!ok) throw std::runtime_error("instrumented pair counts disagree with the closed forms");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatiotemporal imputation with sparse attention"};
  app.require_subcommand(1);
  std::string config_path;
  std::string checkpoint;
  std::string out_file;
  std::string synth_out;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic sensor network dataset");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--config", config_path, "Run config with an optional synth section");
  auto* inject = app.add_subcommand("inject", "Write masks with injected missing data");
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  auto* impute = app.add_subcommand("impute", "Fill missing entries with a trained model");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a checkpoint against the baselines");
  auto* bench = app.add_subcommand("benchmark", "Count attention pairs and time forward passes");
  for (auto* cmd : {inject, train_cmd, impute, evaluate_cmd}) {
    cmd->add_option("--config", config_path, "Run config JSON")->required();
  }
  bench->add_option("--config", config_path, "Run config JSON");
  for (auto* cmd : {impute, evaluate_cmd}) {
    cmd->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
  }
  impute->add_option("--out", out_file, "Imputed CSV path (default: <output.dir>/imputed.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_out, config_path);
    if (bench->parsed()) {
      RunConfig config;
      if (!config_path.empty()) config = RunConfig::load(config_path);
      return cmd_benchmark(config);
    }
    const RunConfig config = RunConfig::load(config_path);
    for (const std::string& w : config.warnings()) std::cerr << "warning: " << w << '\n';
    if (inject->parsed()) return cmd_inject(config);
    if (train_cmd->parsed()) return cmd_train(config);
    if (impute->parsed()) return cmd_impute(config, checkpoint, out_file);
    if (evaluate_cmd->parsed()) return cmd_evaluate(config, checkpoint);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const EmptySetError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
