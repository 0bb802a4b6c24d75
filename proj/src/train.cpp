#include "spin/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "spin/errors.hpp"
#include "spin/optim.hpp"

namespace spin {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// The view of a window a model is allowed to see: values survive only where
// `visible` is set.
SpatioTemporalWindow model_input(const SpatioTemporalWindow& window, const Mask& visible) {
  SpatioTemporalWindow in = window;
  in.mask = visible;
  in.eval_mask = Mask(window.steps, window.nodes);
  for (std::size_t k = 0; k < in.values.size(); ++k) {
    if (!visible.bits[k]) in.values[k] = kNaN;
  }
  return in;
}

// Columns `cols` of a window, in the given order.
SpatioTemporalWindow select_columns(const SpatioTemporalWindow& window,
                                    std::span<const std::size_t> cols) {
  SpatioTemporalWindow out;
  out.steps = window.steps;
  out.nodes = cols.size();
  out.values.resize(out.steps * out.nodes);
  out.mask = Mask(out.steps, out.nodes);
  out.eval_mask = Mask(out.steps, out.nodes);
  out.step_index = window.step_index;
  for (std::size_t t = 0; t < out.steps; ++t) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const std::size_t src = t * window.nodes + cols[c];
      const std::size_t dst = t * out.nodes + c;
      out.values[dst] = window.values[src];
      out.mask.bits[dst] = window.mask.bits[src];
      out.eval_mask.bits[dst] = window.eval_mask.bits[src];
    }
  }
  for (std::size_t c : cols) out.node_ids.push_back(window.node_ids[c]);
  return out;
}

Mask select_mask_columns(const Mask& mask, std::span<const std::size_t> cols) {
  Mask out(mask.steps, cols.size());
  for (std::size_t t = 0; t < mask.steps; ++t) {
    for (std::size_t c = 0; c < cols.size(); ++c) out.at(t, c) = mask.at(t, cols[c]);
  }
  return out;
}

void check_no_leakage(const Mask& loss_mask, const Mask& eval_mask) {
  for (std::size_t k = 0; k < loss_mask.bits.size(); ++k) {
    if (loss_mask.bits[k] && eval_mask.bits[k]) {
      throw std::logic_error("evaluation entry selected as a training target");
    }
  }
}

struct WindowLoss {
  double loss = 0.0;
  GradientMap grads;
};

// Forward and backward of one whitened window. Returns nothing when the
// loss mask ends up empty.
std::optional<WindowLoss> window_step(const SpinModel& model, const ParameterStore& params,
                                      const SpatioTemporalWindow& window,
                                      const SensorGraph& graph, const TrainConfig& config,
                                      std::mt19937_64& rng) {
  const WhitenResult whiten = training_whiten(window, rng);
  check_no_leakage(whiten.loss_mask, window.eval_mask);

  SpatioTemporalWindow input = model_input(window, whiten.input_mask);
  Mask loss_mask = whiten.loss_mask;
  std::vector<double> truth = window.values;
  const SensorGraph* run_graph = &graph;
  Subgraph sub;

  if (config.subsample) {
    std::vector<std::size_t> nodes(window.nodes);
    std::iota(nodes.begin(), nodes.end(), std::size_t{0});
    const std::size_t n = std::min(config.subsample->seeds, nodes.size());
    for (std::size_t k = 0; k < n; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, nodes.size() - 1);
      std::swap(nodes[k], nodes[pick(rng)]);
    }
    nodes.resize(n);
    sub = khop_subgraph(graph, nodes, config.subsample->hops);
    input = select_columns(input, sub.original);
    SpatioTemporalWindow truth_window = select_columns(window, sub.original);
    truth = std::move(truth_window.values);
    loss_mask = select_mask_columns(loss_mask, sub.original);
    // Only the seeds supervise the step.
    for (std::size_t t = 0; t < loss_mask.steps; ++t) {
      for (std::size_t c = 0; c < loss_mask.nodes; ++c) {
        if (!sub.is_seed[c]) loss_mask.at(t, c) = 0;
      }
    }
    run_graph = &sub.graph;
  }
  if (loss_mask.count() == 0) return std::nullopt;

  Tape tape;
  BoundParameters bound(tape, params);
  const ForwardPass pass = model.forward(bound, input, *run_graph);
  const Value loss = spin_loss(pass.layer_outputs, truth, loss_mask);
  tape.backward(loss);
  return WindowLoss{loss.data()[0], bound.gradients()};
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs_max == 0 || batches_per_epoch == 0 || batch_size == 0 || patience == 0 ||
      window == 0) {
    throw ValidationError("training counts must be positive");
  }
  if (patience > epochs_max) {
    throw ValidationError("patience " + std::to_string(patience) + " exceeds epochs-max " +
                          std::to_string(epochs_max));
  }
  if (!(lr >= 0.0) || warmup < 0 || !(restart_period > 0.0) || !(clip_norm > 0.0)) {
    throw ValidationError("learning rate, warm-up, restart period and clip norm must be valid");
  }
  if (subsample && (subsample->seeds == 0 || subsample->hops == 0)) {
    throw ValidationError("subsampling needs at least one seed and one hop");
  }
}

Value spin_loss(std::span<const Value> layer_outputs, std::span<const double> truth,
                const Mask& loss_mask) {
  if (layer_outputs.empty()) throw ValidationError("spin_loss needs at least one layer output");
  if (truth.size() != loss_mask.bits.size()) {
    throw DimensionError("spin_loss: truth has " + std::to_string(truth.size()) +
                         " entries, loss mask " + std::to_string(loss_mask.bits.size()));
  }
  std::vector<std::size_t> rows;
  for (std::size_t k = 0; k < loss_mask.bits.size(); ++k) {
    if (loss_mask.bits[k]) rows.push_back(k);
  }
  if (rows.empty()) throw EmptySetError("spin_loss over an empty loss mask");
  Tensor target(Shape{rows.size(), 1});
  for (std::size_t r = 0; r < rows.size(); ++r) target[r] = truth[rows[r]];

  Tape& tape = layer_outputs.front().tape();
  const Value y = tape.constant(std::move(target));
  Value total;
  for (const Value& out : layer_outputs) {
    if (out.data().size() != truth.size()) {
      throw DimensionError("spin_loss: layer output " + out.shape().str() + " vs " +
                           std::to_string(truth.size()) + " targets");
    }
    const Value term = mean(abs(sub(gather_rows(out, rows), y)));
    total = total.valid() ? add(total, term) : term;
  }
  return total;
}

double spin_loss(const ImputationOutput& output, std::span<const double> truth,
                 const Mask& loss_mask) {
  if (output.layers.empty()) throw ValidationError("spin_loss needs at least one layer output");
  double total = 0.0;
  for (const auto& layer : output.layers) total += mae(layer, truth, loss_mask);
  return total;
}

double validation_mae(const SpinModel& model, const ParameterStore& params,
                      const Dataset& dataset, const SensorGraph& graph, StepRange range,
                      std::size_t window, std::uint64_t seed) {
  const auto windows = make_windows(dataset, window, window, range);
  std::vector<double> per_window;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    std::mt19937_64 rng(seed + w);
    const WhitenResult whiten = training_whiten(windows[w], rng);
    if (whiten.loss_mask.count() == 0) continue;
    const ImputationOutput out =
        model.impute(params, model_input(windows[w], whiten.input_mask), graph);
    per_window.push_back(mae(out.final_layer(), windows[w].values, whiten.loss_mask));
  }
  if (per_window.empty()) throw EmptySetError("validation range has no visible entries");
  return mean_of_window_maes(per_window);
}

TrainResult train(const SpinModel& model, const Dataset& dataset, const SensorGraph& graph,
                  const DataSplit& split, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (!dataset.stats) throw ValidationError("train expects a normalized dataset");
  if (graph.node_count() != dataset.nodes || model.node_count() != dataset.nodes) {
    throw DimensionError("dataset, graph and model disagree on the node count");
  }
  if (split.train.size() < config.window) {
    throw ValidationError("training range of " + std::to_string(split.train.size()) +
                          " steps is shorter than the window " + std::to_string(config.window));
  }

  TrainResult result;
  ParameterStore params = model.initialize(config.seed);
  result.best = params;
  AdamState adam;
  const ScheduleConfig schedule{config.lr, config.warmup, config.restart_period};
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> offset(split.train.begin,
                                                    split.train.end - config.window);
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::int64_t step = 0;
  double lr = 0.0;

  for (std::size_t epoch = 0; epoch < config.epochs_max; ++epoch) {
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t batch = 0; batch < config.batches_per_epoch; ++batch) {
      GradientMap grads;
      double batch_loss = 0.0;
      std::size_t used = 0;
      for (std::size_t b = 0; b < config.batch_size; ++b) {
        const SpatioTemporalWindow window = window_at(dataset, offset(rng), config.window);
        std::optional<WindowLoss> wl;
        try {
          wl = window_step(model, params, window, graph, config, rng);
        } catch (const NumericError& e) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch + 1) +
                             ", batch " + std::to_string(batch + 1) + ": " + e.what());
        }
        if (!wl) continue;
        batch_loss += wl->loss;
        accumulate_gradients(grads, wl->grads);
        ++used;
      }
      if (used == 0) {
        ++result.skipped_batches;
        continue;
      }
      batch_loss /= static_cast<double>(used);
      if (!std::isfinite(batch_loss)) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch + 1) +
                           ", batch " + std::to_string(batch + 1) + ": loss is not finite");
      }
      scale_gradients(grads, 1.0 / static_cast<double>(used));
      clip_global_norm(grads, config.clip_norm);
      const double progress =
          static_cast<double>(epoch) +
          static_cast<double>(batch) / static_cast<double>(config.batches_per_epoch);
      lr = lr_schedule(step, progress, schedule);
      adam_step(params, grads, adam, lr);
      ++step;
      loss_sum += batch_loss;
      ++loss_count;
    }

    HistoryRow row;
    row.epoch = epoch + 1;
    row.train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : kNaN;
    row.val_mae = validation_mae(model, params, dataset, graph, split.validation, config.window,
                                 config.validation_seed);
    row.lr = lr;
    result.history.push_back(row);
    if (on_epoch) on_epoch(row);

    if (row.val_mae < best) {
      best = row.val_mae;
      result.best = params;
      result.best_epoch = row.epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

EvaluationResult evaluate_imputer(const Imputer& imputer, const Dataset& dataset, StepRange range,
                                  std::size_t window, std::size_t stride) {
  const NormalizationStats stats = dataset.stats.value_or(NormalizationStats{});
  const auto windows = make_windows(dataset, window, stride == 0 ? window : stride, range);
  EvaluationResult result;
  std::vector<double> node_sum(dataset.nodes, 0.0);
  std::vector<std::size_t> node_count(dataset.nodes, 0);
  for (const auto& w : windows) {
    const std::size_t n = w.eval_mask.count();
    if (n == 0) continue;
    const std::vector<double> pred = imputer(model_input(w, w.mask));
    if (pred.size() != w.values.size()) {
      throw DimensionError("imputer returned " + std::to_string(pred.size()) + " values for a " +
                           std::to_string(w.values.size()) + "-entry window");
    }
    double total = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
      if (!w.eval_mask.bits[k]) continue;
      const double err = std::fabs(stats.invert(pred[k]) - stats.invert(w.values[k]));
      total += err;
      node_sum[w.node_ids[k % w.nodes]] += err;
      ++node_count[w.node_ids[k % w.nodes]];
    }
    result.per_window.push_back(total / static_cast<double>(n));
    result.n_eval += n;
  }
  if (result.per_window.empty()) throw EmptySetError("no evaluation entries in the test range");
  result.mae = mean_of_window_maes(result.per_window);
  result.per_node.resize(dataset.nodes);
  for (std::size_t i = 0; i < dataset.nodes; ++i) {
    result.per_node[i] =
        node_count[i] > 0 ? node_sum[i] / static_cast<double>(node_count[i]) : kNaN;
  }
  return result;
}

EvaluationResult evaluate(const SpinModel& model, const ParameterStore& params,
                          const Dataset& dataset, const SensorGraph& graph, StepRange range,
                          std::size_t window, std::size_t stride) {
  return evaluate_imputer(
      [&](const SpatioTemporalWindow& w) { return model.impute(params, w, graph).final_layer(); },
      dataset, range, window, stride);
}

std::vector<double> impute_dataset(const SpinModel& model, const ParameterStore& params,
                                   const Dataset& dataset, const SensorGraph& graph,
                                   std::size_t window) {
  if (window == 0 || window > dataset.steps) {
    throw ValidationError("window " + std::to_string(window) + " does not fit " +
                          std::to_string(dataset.steps) + " steps");
  }
  std::vector<std::size_t> offsets;
  for (std::size_t off = 0; off + window <= dataset.steps; off += window) offsets.push_back(off);
  if (offsets.back() + window < dataset.steps) offsets.push_back(dataset.steps - window);

  std::vector<double> out(dataset.values.size(), kNaN);
  for (std::size_t off : offsets) {
    const SpatioTemporalWindow w = window_at(dataset, off, window);
    const auto pred = model.impute(params, model_input(w, w.mask), graph).final_layer();
    for (std::size_t k = 0; k < pred.size(); ++k) out[off * dataset.nodes + k] = pred[k];
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (dataset.mask.bits[k]) out[k] = dataset.values[k];
  }
  return out;
}

std::vector<double> fit_node_means(const Dataset& dataset, StepRange range) {
  if (range.end > dataset.steps || range.begin > range.end) {
    throw ValidationError("mean range exceeds the dataset");
  }
  std::vector<double> sum(dataset.nodes, 0.0);
  std::vector<std::size_t> count(dataset.nodes, 0);
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t t = range.begin; t < range.end; ++t) {
    for (std::size_t i = 0; i < dataset.nodes; ++i) {
      if (!dataset.mask.at(t, i)) continue;
      sum[i] += dataset.value(t, i);
      ++count[i];
      total += dataset.value(t, i);
      ++n;
    }
  }
  if (n == 0) throw EmptySetError("no visible entries to average");
  const double global = total / static_cast<double>(n);
  std::vector<double> means(dataset.nodes);
  for (std::size_t i = 0; i < dataset.nodes; ++i) {
    means[i] = count[i] > 0 ? sum[i] / static_cast<double>(count[i]) : global;
  }
  return means;
}

std::vector<double> baseline_mean(const SpatioTemporalWindow& window,
                                  std::span<const double> node_means) {
  std::vector<double> out(window.values.size());
  for (std::size_t t = 0; t < window.steps; ++t) {
    for (std::size_t i = 0; i < window.nodes; ++i) {
      const std::size_t k = t * window.nodes + i;
      const std::size_t id = window.node_ids[i];
      if (id >= node_means.size()) throw ValidationError("node without a fitted mean");
      out[k] = window.mask.bits[k] ? window.values[k] : node_means[id];
    }
  }
  return out;
}

std::vector<double> baseline_knn(const SpatioTemporalWindow& window, const SensorGraph& graph,
                                 std::span<const double> node_means) {
  if (graph.node_count() != window.nodes) {
    throw DimensionError("graph and window disagree on the node count");
  }
  std::vector<double> out = baseline_mean(window, node_means);
  for (std::size_t t = 0; t < window.steps; ++t) {
    for (std::size_t i = 0; i < window.nodes; ++i) {
      const std::size_t k = t * window.nodes + i;
      if (window.mask.bits[k]) continue;
      double num = 0.0;
      double den = 0.0;
      for (const Neighbor& nb : graph.in_neighbors(i)) {
        if (!window.mask.at(t, nb.node)) continue;
        num += nb.weight * window.value(t, nb.node);
        den += nb.weight;
      }
      if (den > 0.0) out[k] = num / den;
    }
  }
  return out;
}

}  // namespace spin
