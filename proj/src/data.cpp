#include "spin/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "spin/csv.hpp"
#include "spin/errors.hpp"

namespace spin {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool row_is_numeric(const csv::Row& row) {
  for (const auto& cell : row) {
    if (cell.empty()) continue;
    double tmp = 0;
    try {
      csv::parse_number(cell, tmp, "header probe");
    } catch (const ValidationError&) {
      return false;
    }
  }
  return true;
}

void require_rate(double rate, const char* what) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ValidationError(std::string(what) + " must lie in [0, 1), got " + std::to_string(rate));
  }
}

}  // namespace

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

DataSplit split_sequential(std::size_t steps, double train_fraction, double validation_fraction) {
  if (train_fraction <= 0.0 || validation_fraction < 0.0 ||
      train_fraction + validation_fraction >= 1.0) {
    throw ValidationError("split fractions must be positive and sum below 1");
  }
  const auto train_end = static_cast<std::size_t>(std::floor(train_fraction * steps));
  const auto val_end =
      static_cast<std::size_t>(std::floor((train_fraction + validation_fraction) * steps));
  return DataSplit{{0, train_end}, {train_end, val_end}, {val_end, steps}};
}

// --------------------------------------------------------------------------- IO

Mask load_mask_csv(const std::filesystem::path& path, std::size_t steps, std::size_t nodes) {
  auto rows = csv::read(path);
  if (!rows.empty() && !row_is_numeric(rows.front())) rows.erase(rows.begin());
  if (rows.size() != steps) {
    throw DimensionError("mask '" + path.string() + "' has " + std::to_string(rows.size()) +
                         " rows, values have " + std::to_string(steps));
  }
  Mask mask(steps, nodes);
  for (std::size_t t = 0; t < steps; ++t) {
    if (rows[t].size() != nodes) {
      throw DimensionError("mask '" + path.string() + "' row " + std::to_string(t + 1) + " has " +
                           std::to_string(rows[t].size()) + " columns, expected " +
                           std::to_string(nodes));
    }
    for (std::size_t i = 0; i < nodes; ++i) {
      const std::string& cell = rows[t][i];
      if (cell == "0") {
        mask.at(t, i) = 0;
      } else if (cell == "1") {
        mask.at(t, i) = 1;
      } else {
        throw ValidationError("mask '" + path.string() + "' row " + std::to_string(t + 1) +
                              " col " + std::to_string(i + 1) + " holds '" + cell +
                              "', expected 0 or 1");
      }
    }
  }
  return mask;
}

Dataset load_dataset(const std::filesystem::path& values_csv,
                     const std::optional<std::filesystem::path>& mask_csv,
                     const std::optional<std::filesystem::path>& eval_mask_csv) {
  auto rows = csv::read(values_csv);
  Dataset ds;
  if (!rows.empty() && !row_is_numeric(rows.front())) {
    ds.sensor_ids = rows.front();
    rows.erase(rows.begin());
  }
  if (rows.empty()) throw ValidationError("values file '" + values_csv.string() + "' has no rows");
  ds.steps = rows.size();
  ds.nodes = rows.front().size();
  if (ds.sensor_ids.empty()) {
    for (std::size_t i = 0; i < ds.nodes; ++i) ds.sensor_ids.push_back(std::to_string(i));
  } else if (ds.sensor_ids.size() != ds.nodes) {
    throw ValidationError("header of '" + values_csv.string() + "' names " +
                          std::to_string(ds.sensor_ids.size()) + " sensors, rows have " +
                          std::to_string(ds.nodes));
  }
  ds.values.assign(ds.steps * ds.nodes, kNaN);
  Mask present(ds.steps, ds.nodes);
  for (std::size_t t = 0; t < ds.steps; ++t) {
    if (rows[t].size() != ds.nodes) {
      throw ValidationError("ragged row " + std::to_string(t + 1) + " in '" + values_csv.string() +
                            "': " + std::to_string(rows[t].size()) + " cells, expected " +
                            std::to_string(ds.nodes));
    }
    for (std::size_t i = 0; i < ds.nodes; ++i) {
      double v = 0;
      const std::string where = values_csv.string() + " row " + std::to_string(t + 1) + " col " +
                                std::to_string(i + 1);
      if (csv::parse_number(rows[t][i], v, where)) {
        ds.values[t * ds.nodes + i] = v;
        present.at(t, i) = 1;
      }
    }
  }
  if (mask_csv) {
    ds.mask = load_mask_csv(*mask_csv, ds.steps, ds.nodes);
    for (std::size_t k = 0; k < ds.mask.bits.size(); ++k) {
      if (ds.mask.bits[k] && !present.bits[k]) {
        throw ValidationError("mask marks row " + std::to_string(k / ds.nodes + 1) + " col " +
                              std::to_string(k % ds.nodes + 1) + " valid but the value is blank");
      }
    }
  } else {
    ds.mask = present;
  }
  if (eval_mask_csv) {
    ds.eval_mask = load_mask_csv(*eval_mask_csv, ds.steps, ds.nodes);
    for (std::size_t k = 0; k < ds.eval_mask.bits.size(); ++k) {
      if (!ds.eval_mask.bits[k]) continue;
      if (!present.bits[k]) {
        throw ValidationError("evaluation target at row " + std::to_string(k / ds.nodes + 1) +
                              " col " + std::to_string(k % ds.nodes + 1) + " has no value");
      }
      // Targets are hidden from the model.
      ds.mask.bits[k] = 0;
    }
  } else {
    ds.eval_mask = Mask(ds.steps, ds.nodes, 0);
  }
  ds.timestamps.resize(ds.steps);
  std::iota(ds.timestamps.begin(), ds.timestamps.end(), std::int64_t{0});
  return ds;
}

void write_values_csv(const std::filesystem::path& path, std::size_t steps, std::size_t nodes,
                      std::span<const double> values, std::span<const std::string> sensor_ids,
                      const Mask* present) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  for (std::size_t i = 0; i < sensor_ids.size(); ++i) out << (i ? "," : "") << sensor_ids[i];
  if (!sensor_ids.empty()) out << '\n';
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < nodes; ++i) {
      if (i) out << ',';
      const double v = values[t * nodes + i];
      const bool keep = present == nullptr ? std::isfinite(v) : present->at(t, i) != 0;
      if (keep) out << csv::format_number(v);
    }
    out << '\n';
  }
}

void write_mask_csv(const std::filesystem::path& path, const Mask& mask,
                    std::span<const std::string> sensor_ids) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  for (std::size_t i = 0; i < sensor_ids.size(); ++i) out << (i ? "," : "") << sensor_ids[i];
  if (!sensor_ids.empty()) out << '\n';
  for (std::size_t t = 0; t < mask.steps; ++t) {
    for (std::size_t i = 0; i < mask.nodes; ++i) out << (i ? "," : "") << int(mask.at(t, i));
    out << '\n';
  }
}

// --------------------------------------------------------------------------- preprocessing

Dataset normalize(const Dataset& dataset, std::optional<StepRange> fit_range) {
  const StepRange range = fit_range.value_or(StepRange{0, dataset.steps});
  if (range.end > dataset.steps || range.begin > range.end) {
    throw ValidationError("normalization range outside the dataset");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = range.begin; t < range.end; ++t) {
    for (std::size_t i = 0; i < dataset.nodes; ++i) {
      if (dataset.mask.at(t, i)) {
        sum += dataset.value(t, i);
        ++n;
      }
    }
  }
  if (n < 2) throw ValidationError("normalization needs at least 2 visible entries");
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (std::size_t t = range.begin; t < range.end; ++t) {
    for (std::size_t i = 0; i < dataset.nodes; ++i) {
      if (dataset.mask.at(t, i)) {
        const double d = dataset.value(t, i) - mean;
        sq += d * d;
      }
    }
  }
  const double std = std::sqrt(sq / static_cast<double>(n));
  if (!(std > 0.0)) throw ValidationError("zero-variance data cannot be normalized");
  NormalizationStats stats{mean, std};
  Dataset out = dataset;
  if (dataset.stats) {
    // Compose so that denormalize still maps back to original units.
    stats = NormalizationStats{dataset.stats->mean + dataset.stats->std * mean,
                               dataset.stats->std * std};
  }
  for (double& v : out.values) {
    if (std::isfinite(v)) v = (v - mean) / std;
  }
  out.stats = stats;
  return out;
}

Dataset denormalize(const Dataset& dataset) {
  if (!dataset.stats) return dataset;
  Dataset out = dataset;
  for (double& v : out.values) {
    if (std::isfinite(v)) v = dataset.stats->invert(v);
  }
  out.stats.reset();
  return out;
}

SpatioTemporalWindow window_at(const Dataset& dataset, std::size_t offset, std::size_t length) {
  if (offset + length > dataset.steps) {
    throw ValidationError("window [" + std::to_string(offset) + "," +
                          std::to_string(offset + length) + ") exceeds " +
                          std::to_string(dataset.steps) + " steps");
  }
  SpatioTemporalWindow w;
  w.steps = length;
  w.nodes = dataset.nodes;
  w.values.assign(length * dataset.nodes, kNaN);
  w.mask = Mask(length, dataset.nodes);
  w.eval_mask = Mask(length, dataset.nodes);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < dataset.nodes; ++i) {
      const std::size_t src = offset + t;
      const bool visible = dataset.mask.at(src, i) != 0;
      const bool target = dataset.eval_mask.at(src, i) != 0;
      w.mask.at(t, i) = visible;
      w.eval_mask.at(t, i) = target;
      if (visible || target) w.values[t * dataset.nodes + i] = dataset.value(src, i);
    }
    w.step_index.push_back(dataset.timestamps[offset + t]);
  }
  w.node_ids.resize(dataset.nodes);
  std::iota(w.node_ids.begin(), w.node_ids.end(), std::size_t{0});
  return w;
}

std::vector<SpatioTemporalWindow> make_windows(const Dataset& dataset, std::size_t length,
                                               std::size_t stride,
                                               std::optional<StepRange> range) {
  const StepRange r = range.value_or(StepRange{0, dataset.steps});
  if (stride == 0) throw ValidationError("window stride must be at least 1");
  if (length == 0) throw ValidationError("window length must be at least 1");
  if (length > r.size()) {
    throw ValidationError("window length " + std::to_string(length) + " exceeds " +
                          std::to_string(r.size()) + " available steps");
  }
  std::vector<SpatioTemporalWindow> out;
  for (std::size_t off = r.begin; off + length <= r.end; off += stride) {
    out.push_back(window_at(dataset, off, length));
  }
  return out;
}

// --------------------------------------------------------------------------- injection

Injection inject_point_missing(const Mask& mask, double rate, std::uint64_t seed) {
  require_rate(rate, "point-missing rate");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Injection out{mask, Mask(mask.steps, mask.nodes)};
  for (std::size_t k = 0; k < mask.bits.size(); ++k) {
    if (!mask.bits[k]) continue;
    if (u(rng) < rate) {
      out.mask.bits[k] = 0;
      out.eval_mask.bits[k] = 1;
    }
  }
  return out;
}

Injection inject_block_missing(const Mask& mask, const BlockMissingParams& params,
                               std::uint64_t seed) {
  require_rate(params.point_rate, "block-missing point rate");
  if (!(params.failure_prob >= 0.0 && params.failure_prob <= 1.0)) {
    throw ValidationError("failure probability must lie in [0, 1]");
  }
  if (params.len_min > params.len_max || params.len_min == 0) {
    throw ValidationError("failure lengths need 1 <= len_min <= len_max");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> length(params.len_min, params.len_max);
  Injection out{mask, Mask(mask.steps, mask.nodes)};
  for (std::size_t i = 0; i < mask.nodes; ++i) {
    for (std::size_t t = 0; t < mask.steps; ++t) {
      if (u(rng) >= params.failure_prob) continue;
      const std::size_t end = std::min(mask.steps, t + length(rng));
      for (std::size_t s = t; s < end; ++s) out.mask.at(s, i) = 0;
    }
  }
  for (std::size_t k = 0; k < mask.bits.size(); ++k) {
    if (out.mask.bits[k] && u(rng) < params.point_rate) out.mask.bits[k] = 0;
  }
  for (std::size_t k = 0; k < mask.bits.size(); ++k) {
    out.eval_mask.bits[k] = mask.bits[k] && !out.mask.bits[k];
  }
  return out;
}

Injection inject_sparsity_sweep(const Mask& mask, double p, std::uint64_t seed) {
  require_rate(p, "sparsity probability");
  return inject_point_missing(mask, p, seed);
}

Dataset apply_injection(const Dataset& dataset, const Injection& injection) {
  if (!injection.mask.same_shape(dataset.mask) || !injection.eval_mask.same_shape(dataset.mask)) {
    throw DimensionError("injection masks do not match the dataset");
  }
  Dataset out = dataset;
  out.mask = injection.mask;
  for (std::size_t k = 0; k < out.eval_mask.bits.size(); ++k) {
    out.eval_mask.bits[k] = out.eval_mask.bits[k] || injection.eval_mask.bits[k];
  }
  return out;
}

WhitenResult training_whiten_with_ratio(const SpatioTemporalWindow& window, double ratio,
                                        std::mt19937_64& rng) {
  std::vector<std::size_t> visible;
  for (std::size_t k = 0; k < window.mask.bits.size(); ++k) {
    if (window.mask.bits[k] && !window.eval_mask.bits[k]) visible.push_back(k);
  }
  WhitenResult out{Mask(window.steps, window.nodes), Mask(window.steps, window.nodes), ratio};
  for (std::size_t k : visible) out.input_mask.bits[k] = 1;
  if (visible.empty()) return out;
  auto hidden = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(visible.size())));
  hidden = std::clamp<std::size_t>(hidden, 1, visible.size());
  // Partial Fisher-Yates: the first `hidden` slots become the sample.
  for (std::size_t k = 0; k < hidden; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, visible.size() - 1);
    std::swap(visible[k], visible[pick(rng)]);
    out.input_mask.bits[visible[k]] = 0;
    out.loss_mask.bits[visible[k]] = 1;
  }
  return out;
}

WhitenResult training_whiten(const SpatioTemporalWindow& window, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, std::size(kWhitenRatios) - 1);
  return training_whiten_with_ratio(window, kWhitenRatios[pick(rng)], rng);
}

double mae(std::span<const double> predictions, std::span<const double> truth, const Mask& mask) {
  if (predictions.size() != truth.size() || truth.size() != mask.bits.size()) {
    throw DimensionError("mae: predictions " + std::to_string(predictions.size()) + ", truth " +
                         std::to_string(truth.size()) + ", mask " +
                         std::to_string(mask.bits.size()));
  }
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (!mask.bits[k]) continue;
    total += std::fabs(predictions[k] - truth[k]);
    ++n;
  }
  if (n == 0) throw EmptySetError("mae over an empty evaluation mask");
  return total / static_cast<double>(n);
}

double mean_of_window_maes(std::span<const double> per_window) {
  if (per_window.empty()) throw EmptySetError("no windows to average");
  return std::accumulate(per_window.begin(), per_window.end(), 0.0) /
         static_cast<double>(per_window.size());
}

}  // namespace spin
