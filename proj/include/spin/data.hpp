#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace spin {

// Binary grid over (step, node), row-major by step.
struct Mask {
  std::size_t steps = 0;
  std::size_t nodes = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t steps, std::size_t nodes, std::uint8_t fill = 0)
      : steps(steps), nodes(nodes), bits(steps * nodes, fill) {}

  std::uint8_t& at(std::size_t t, std::size_t i) { return bits[t * nodes + i]; }
  std::uint8_t at(std::size_t t, std::size_t i) const { return bits[t * nodes + i]; }
  std::size_t count() const;
  bool same_shape(const Mask& other) const { return steps == other.steps && nodes == other.nodes; }
};

struct NormalizationStats {
  double mean = 0.0;
  double std = 1.0;

  double apply(double x) const { return (x - mean) / std; }
  double invert(double z) const { return z * std + mean; }
};

// Sensor readings with one feature per sensor. values at mask == 0 are
// undefined (NaN when loaded from blanks) unless the entry is an evaluation
// target, in which case values holds the ground truth hidden from models.
struct Dataset {
  std::size_t steps = 0;
  std::size_t nodes = 0;
  std::vector<double> values;
  Mask mask;       // entries visible to models
  Mask eval_mask;  // hidden entries with ground truth, disjoint from mask
  std::vector<std::int64_t> timestamps;
  std::vector<std::string> sensor_ids;
  std::optional<NormalizationStats> stats;  // set once normalized

  double value(std::size_t t, std::size_t i) const { return values[t * nodes + i]; }
};

struct StepRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct DataSplit {
  StepRange train, validation, test;
};

// Sequential split; the test range takes whatever the first two leave.
DataSplit split_sequential(std::size_t steps, double train_fraction = 0.7,
                           double validation_fraction = 0.1);

// One length-W slice. Values are copied only where the source had ground
// truth; every other entry is NaN.
struct SpatioTemporalWindow {
  std::size_t steps = 0;
  std::size_t nodes = 0;
  std::vector<double> values;
  Mask mask;
  Mask eval_mask;
  std::vector<std::int64_t> step_index;  // absolute time of each row
  std::vector<std::size_t> node_ids;     // global node id of each column

  double value(std::size_t t, std::size_t i) const { return values[t * nodes + i]; }
};

// Blank or "nan" cells are missing when no mask file is given. The values
// file may carry a header row of sensor ids.
Dataset load_dataset(const std::filesystem::path& values_csv,
                     const std::optional<std::filesystem::path>& mask_csv = std::nullopt,
                     const std::optional<std::filesystem::path>& eval_mask_csv = std::nullopt);
Mask load_mask_csv(const std::filesystem::path& path, std::size_t steps, std::size_t nodes);
void write_values_csv(const std::filesystem::path& path, std::size_t steps, std::size_t nodes,
                      std::span<const double> values, std::span<const std::string> sensor_ids,
                      const Mask* present = nullptr);
void write_mask_csv(const std::filesystem::path& path, const Mask& mask,
                    std::span<const std::string> sensor_ids);

// Standardizes with statistics from visible entries inside `fit_range`
// (defaults to all steps). Throws ValidationError when fewer than two visible
// entries exist or their variance is zero.
Dataset normalize(const Dataset& dataset, std::optional<StepRange> fit_range = std::nullopt);
Dataset denormalize(const Dataset& dataset);

std::vector<SpatioTemporalWindow> make_windows(const Dataset& dataset, std::size_t length,
                                               std::size_t stride,
                                               std::optional<StepRange> range = std::nullopt);
SpatioTemporalWindow window_at(const Dataset& dataset, std::size_t offset, std::size_t length);

// ---------------------------------------------------------------------------
// Missing-data injection. Every injector returns the reduced visibility mask
// and the removed entries; the two are disjoint and their union is the input.

struct Injection {
  Mask mask;
  Mask eval_mask;
};

Injection inject_point_missing(const Mask& mask, double rate, std::uint64_t seed);

struct BlockMissingParams {
  double point_rate = 0.05;
  double failure_prob = 0.0015;
  std::size_t len_min = 12;
  std::size_t len_max = 48;
};
Injection inject_block_missing(const Mask& mask, const BlockMissingParams& params,
                               std::uint64_t seed);

Injection inject_sparsity_sweep(const Mask& mask, double p, std::uint64_t seed);

// Applies an injection to a dataset: visibility shrinks, removed entries
// join the evaluation mask.
Dataset apply_injection(const Dataset& dataset, const Injection& injection);

// Training-time masking of a window's visible entries.
struct WhitenResult {
  Mask input_mask;  // what the model may read
  Mask loss_mask;   // hidden entries used as targets
  double ratio = 0.0;
};

inline constexpr double kWhitenRatios[] = {0.2, 0.5, 0.8};

WhitenResult training_whiten(const SpatioTemporalWindow& window, std::mt19937_64& rng);
// Same, with the ratio given instead of drawn.
WhitenResult training_whiten_with_ratio(const SpatioTemporalWindow& window, double ratio,
                                        std::mt19937_64& rng);

// Mean absolute error over entries with mask == 1. Throws EmptySetError when
// the mask selects nothing.
double mae(std::span<const double> predictions, std::span<const double> truth, const Mask& mask);
// Average of per-window errors (not the pooled error).
double mean_of_window_maes(std::span<const double> per_window);

}  // namespace spin
