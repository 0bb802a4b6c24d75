#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spin/autodiff.hpp"
#include "spin/data.hpp"
#include "spin/graph.hpp"
#include "spin/model.hpp"
#include "spin/parameters.hpp"

namespace spin {

struct SubsampleConfig {
  std::size_t seeds = 8;  // n
  std::size_t hops = 2;   // k
};

struct TrainConfig {
  std::size_t epochs_max = 300;
  std::size_t batches_per_epoch = 300;
  std::size_t batch_size = 8;
  std::size_t patience = 40;
  double lr = 0.0008;
  std::int64_t warmup = 12;
  double restart_period = 100.0;
  std::uint64_t seed = 0;
  std::optional<SubsampleConfig> subsample;
  std::size_t window = 24;
  double clip_norm = 5.0;
  std::uint64_t validation_seed = 4242;

  // Throws ValidationError on zero counts or patience > epochs_max.
  void validate() const;
};

// Sum over layers of the mean absolute error on the loss mask. Returns a
// scalar on the tape of the layer outputs ([W*N, 1] each). Throws
// EmptySetError when the loss mask is empty, which callers treat as "skip".
Value spin_loss(std::span<const Value> layer_outputs, std::span<const double> truth,
                const Mask& loss_mask);
double spin_loss(const ImputationOutput& output, std::span<const double> truth,
                 const Mask& loss_mask);

struct HistoryRow {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_mae = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ParameterStore best;
  std::vector<HistoryRow> history;
  std::size_t best_epoch = 0;
  std::size_t skipped_batches = 0;
  bool stopped_early = false;
};

// Called after every epoch; handy for progress output.
using EpochCallback = std::function<void(const HistoryRow&)>;

// Trains on the split's training range of a normalized dataset and keeps the
// parameters with the best validation error.
TrainResult train(const SpinModel& model, const Dataset& dataset, const SensorGraph& graph,
                  const DataSplit& split, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Validation error in normalized units: final-layer MAE on seeded
// whiten-masks over non-overlapping windows, averaged across windows.
double validation_mae(const SpinModel& model, const ParameterStore& params,
                      const Dataset& dataset, const SensorGraph& graph, StepRange range,
                      std::size_t window, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Evaluation

struct EvaluationResult {
  double mae = 0.0;  // mean of per-window errors, data units
  std::size_t n_eval = 0;
  std::vector<double> per_window;
  std::vector<double> per_node;  // NaN for nodes without evaluation entries
};

// Produces a full W*N prediction grid for a window (normalized units).
using Imputer = std::function<std::vector<double>(const SpatioTemporalWindow&)>;

// Runs an imputer on windows of `range` (stride 0 means non-overlapping),
// denormalizes, and scores the evaluation mask. Windows without evaluation
// entries are skipped. Throws EmptySetError when nothing is evaluated.
EvaluationResult evaluate_imputer(const Imputer& imputer, const Dataset& dataset, StepRange range,
                                  std::size_t window, std::size_t stride = 0);

EvaluationResult evaluate(const SpinModel& model, const ParameterStore& params,
                          const Dataset& dataset, const SensorGraph& graph, StepRange range,
                          std::size_t window, std::size_t stride = 0);

// Full-grid imputation of a dataset: visible entries pass through, every
// other entry gets the model's final-layer estimate (normalized units).
std::vector<double> impute_dataset(const SpinModel& model, const ParameterStore& params,
                                   const Dataset& dataset, const SensorGraph& graph,
                                   std::size_t window);

// ---------------------------------------------------------------------------
// Baselines

// Per-node mean of visible entries in `range`; nodes without any fall back to
// the global mean. Throws EmptySetError when the range has no visible entry.
std::vector<double> fit_node_means(const Dataset& dataset, StepRange range);

// Visible entries pass through, the rest get the node mean.
std::vector<double> baseline_mean(const SpatioTemporalWindow& window,
                                  std::span<const double> node_means);
// Missing (t, i) gets the a(j, i)-weighted mean of visible in-neighbours at
// step t, or the node mean when none is visible.
std::vector<double> baseline_knn(const SpatioTemporalWindow& window, const SensorGraph& graph,
                                 std::span<const double> node_means);

}  // namespace spin
