#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spin/benchmark.hpp"
#include "spin/data.hpp"
#include "spin/graph.hpp"
#include "spin/model.hpp"
#include "spin/synth.hpp"
#include "spin/train.hpp"

namespace spin {

struct DataSection {
  std::filesystem::path values_csv;
  std::optional<std::filesystem::path> mask_csv;
  std::optional<std::filesystem::path> eval_mask_csv;
  std::optional<std::filesystem::path> distances_csv;
  std::optional<std::filesystem::path> edges_csv;
  std::optional<double> gamma;
  std::optional<double> delta;
  std::size_t window = 24;
  std::size_t stride = 1;
  double train_fraction = 0.7;
  double validation_fraction = 0.1;
};

enum class InjectPolicy { none, point, block, sweep };

struct InjectSection {
  InjectPolicy policy = InjectPolicy::none;
  double rate = 0.25;        // point
  BlockMissingParams block;  // block
  double p = 0.25;           // sweep
  std::uint64_t seed = 0;
};

std::string to_string(InjectPolicy policy);
InjectPolicy parse_policy(const std::string& name);

// A whole run as one JSON document. Unknown keys are rejected so typos
// surface as validation errors instead of silently using defaults.
struct RunConfig {
  DataSection data;
  ModelConfig model;
  TrainConfig train;
  InjectSection inject;
  std::filesystem::path output_dir = "out";
  SynthConfig synth;
  BenchmarkConfig benchmark;

  // Relative paths are resolved against base_dir.
  static RunConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
  // Every field, defaults included.
  nlohmann::json to_json() const;
  void validate() const;
  // Legal but suspicious settings, such as at least as many hubs as steps.
  std::vector<std::string> warnings() const;
};

Injection run_injection(const InjectSection& inject, const Mask& mask);

// Edge list, or a thresholded Gaussian kernel over the distance matrix.
SensorGraph load_graph(const DataSection& data, std::size_t node_count);

struct PreparedData {
  Dataset raw;         // after injection, data units
  Dataset normalized;  // statistics fitted on the training range
  DataSplit split;
  SensorGraph graph;
};

// Loads values and masks. When no evaluation mask file is given and a policy
// is configured, the injection is applied in process with its seed.
PreparedData prepare_data(const RunConfig& config);

}  // namespace spin
