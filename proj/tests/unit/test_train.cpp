#include <cmath>
#include <random>

#include "doctest.h"
#include "spin/errors.hpp"
#include "spin/synth.hpp"
#include "spin/train.hpp"
#include "support.hpp"

using namespace spin;

namespace {

// Already-normalized dataset with identity statistics.
Dataset normalized_dataset(std::size_t steps, std::size_t nodes,
                           const std::function<double(std::size_t, std::size_t)>& value) {
  Dataset ds;
  ds.steps = steps;
  ds.nodes = nodes;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < nodes; ++i) ds.values.push_back(value(t, i));
    ds.timestamps.push_back(std::int64_t(t));
  }
  ds.mask = Mask(steps, nodes, 1);
  ds.eval_mask = Mask(steps, nodes, 0);
  for (std::size_t i = 0; i < nodes; ++i) ds.sensor_ids.push_back(std::to_string(i));
  ds.stats = NormalizationStats{};
  return ds;
}

SpatioTemporalWindow row_window(std::vector<double> values, std::vector<std::uint8_t> mask) {
  SpatioTemporalWindow w;
  w.steps = 1;
  w.nodes = values.size();
  w.values = std::move(values);
  w.mask = Mask(1, w.nodes);
  w.mask.bits = std::move(mask);
  w.eval_mask = Mask(1, w.nodes);
  w.step_index = {0};
  for (std::size_t i = 0; i < w.nodes; ++i) w.node_ids.push_back(i);
  return w;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs_max = 3;
  c.batches_per_epoch = 4;
  c.batch_size = 2;
  c.patience = 3;
  c.window = 6;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("spin loss sums per-layer errors") {
  Tape tape;
  const Value a = tape.constant(Tensor(Shape{2, 1}, std::vector<double>{1.0, 3.0}));
  const Value b = tape.constant(Tensor(Shape{2, 1}, std::vector<double>{2.0, 2.0}));
  const double truth[] = {2.0, 2.5};
  Mask m(2, 1, 1);
  const Value layers[] = {a, b};
  // layer 1: (1 + 0.5) / 2 = 0.75, layer 2: (0 + 0.5) / 2 = 0.25
  CHECK(spin_loss(layers, truth, m).data()[0] == doctest::Approx(1.0));
  m.bits[1] = 0;
  CHECK(spin_loss(layers, truth, m).data()[0] == doctest::Approx(1.0));
  CHECK_THROWS_AS(spin_loss(layers, truth, Mask(2, 1, 0)), EmptySetError);

  ImputationOutput out{1, 2, {{1.0, 2.0}, {2.0, 2.5}}};
  const double t2[] = {2.0, 2.5};
  CHECK(spin_loss(out, t2, Mask(1, 2, 1)) == doctest::Approx(1.5 / 2.0));
  ImputationOutput perfect{1, 2, {{2.0, 2.5}, {2.0, 2.5}}};
  CHECK(spin_loss(perfect, t2, Mask(1, 2, 1)) == 0.0);
  ImputationOutput two{1, 2, {{3.0, 1.5}, {2.5, 3.0}}};
  CHECK(spin_loss(two, t2, Mask(1, 2, 1)) == doctest::Approx(1.5));
}

TEST_CASE("single-layer loss equals the masked error") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 20;
    std::normal_distribution<double> g;
    std::vector<double> pred(n), truth(n);
    for (std::size_t k = 0; k < n; ++k) {
      pred[k] = g(rng);
      truth[k] = g(rng);
    }
    Mask m = testing::random_mask(1, n, 0.5, rng);
    m.bits[rng() % n] = 1;
    Tape tape;
    const Value layer = tape.constant(Tensor(Shape{n, 1}, pred));
    CHECK(spin_loss(std::span<const Value>(&layer, 1), truth, m).data()[0] ==
          doctest::Approx(mae(pred, truth, m)).epsilon(1e-14));
  }
}

TEST_CASE("mean baseline") {
  Dataset ds = normalized_dataset(4, 3, [](std::size_t t, std::size_t i) { return double(t + 10 * i); });
  ds.mask.at(1, 0) = 0;
  ds.mask.at(3, 0) = 0;  // node 0 visible values {0, 2}
  for (std::size_t t = 0; t < 4; ++t) ds.mask.at(t, 2) = 0;
  const auto means = fit_node_means(ds, StepRange{0, 4});
  CHECK(means[0] == 1.0);
  CHECK(means[1] == 11.5);
  CHECK(means[2] == doctest::Approx((0.0 + 2.0 + 10 + 11 + 12 + 13) / 6.0));
  const auto w = row_window({5.0, 7.0, 9.0}, {0, 1, 0});
  const auto out = baseline_mean(w, means);
  CHECK(out == std::vector<double>{1.0, 7.0, means[2]});

  Dataset two = normalized_dataset(2, 1, [](std::size_t t, std::size_t) { return t == 0 ? 2.0 : 4.0; });
  CHECK(fit_node_means(two, StepRange{0, 2})[0] == 3.0);
  two.mask = Mask(2, 1, 0);
  CHECK_THROWS_AS(fit_node_means(two, StepRange{0, 2}), EmptySetError);
}

TEST_CASE("neighbour baseline") {
  const SensorGraph g(3, {{0, 2, 1.0}, {1, 2, 3.0}});
  const double means[] = {100.0, 200.0, 300.0};
  CHECK(baseline_knn(row_window({0.0, 10.0, 0.0}, {1, 1, 0}), g, means)[2] == doctest::Approx(7.5));
  CHECK(baseline_knn(row_window({4.0, 10.0, 0.0}, {1, 0, 0}), g, means)[2] == 4.0);
  CHECK(baseline_knn(row_window({4.0, 10.0, 0.0}, {0, 0, 0}), g, means)[2] == 300.0);
  const auto full = baseline_knn(row_window({1.0, 2.0, 3.0}, {1, 1, 1}), g, means);
  CHECK(full == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("evaluation averages per-window errors") {
  // Two windows of length 2 over one node; the first has one target with
  // error 4, the second three targets with error 1.
  Dataset ds = normalized_dataset(4, 1, [](std::size_t t, std::size_t) { return t == 0 ? 4.0 : 1.0; });
  ds.mask = Mask(4, 1, 0);
  ds.mask.at(1, 0) = 1;
  ds.eval_mask = Mask(4, 1, 1);
  ds.eval_mask.at(1, 0) = 0;
  const Imputer zero = [](const SpatioTemporalWindow& w) { return std::vector<double>(w.values.size(), 0.0); };
  const EvaluationResult r = evaluate_imputer(zero, ds, StepRange{0, 4}, 2);
  CHECK(r.per_window == std::vector<double>{4.0, 1.0});
  CHECK(r.mae == doctest::Approx(2.5));
  CHECK(r.n_eval == 3);
  CHECK(r.per_node[0] == doctest::Approx(2.0));  // pooled: (4 + 1 + 1) / 3

  const Imputer oracle = [&](const SpatioTemporalWindow& w) {
    std::vector<double> out(w.values.size());
    for (std::size_t t = 0; t < w.steps; ++t) out[t] = ds.value(std::size_t(w.step_index[t]), 0);
    return out;
  };
  CHECK(evaluate_imputer(oracle, ds, StepRange{0, 4}, 2).mae == 0.0);

  ds.eval_mask = Mask(4, 1, 0);
  CHECK_THROWS_AS(evaluate_imputer(zero, ds, StepRange{0, 4}, 2), EmptySetError);
}

TEST_CASE("evaluation denormalizes before scoring") {
  Dataset ds = normalized_dataset(2, 1, [](std::size_t, std::size_t) { return 1.0; });
  ds.stats = NormalizationStats{10.0, 3.0};
  ds.mask = Mask(2, 1, 0);
  ds.eval_mask = Mask(2, 1, 1);
  const Imputer zero = [](const SpatioTemporalWindow& w) { return std::vector<double>(w.values.size(), 0.0); };
  CHECK(evaluate_imputer(zero, ds, StepRange{0, 2}, 2).mae == doctest::Approx(3.0));
}

TEST_CASE("training configuration checks") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.patience = 301;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.subsample = SubsampleConfig{0, 1};
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("training is deterministic in the seed") {
  SynthConfig sc;
  sc.nodes = 5;
  sc.steps = 120;
  const SynthData synth = generate_synthetic(sc);
  const Dataset ds = normalize(synth.dataset);
  const DataSplit split = split_sequential(ds.steps, 0.6, 0.2);
  const SpinModel model(testing::small_spin(2, 1, 6), ds.nodes);
  TrainConfig cfg = quick_config();
  const TrainResult a = train(model, ds, synth.graph, split, cfg);
  const TrainResult b = train(model, ds, synth.graph, split, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(std::fabs(a.history[e].train_loss - b.history[e].train_loss) <= 1e-12);
    CHECK(std::fabs(a.history[e].val_mae - b.history[e].val_mae) <= 1e-12);
  }
  cfg.subsample = SubsampleConfig{2, 1};
  const TrainResult c = train(model, ds, synth.graph, split, cfg);
  const TrainResult d = train(model, ds, synth.graph, split, cfg);
  CHECK(c.history.back().val_mae == d.history.back().val_mae);
}

TEST_CASE("early stopping without progress") {
  SynthConfig sc;
  sc.nodes = 4;
  sc.steps = 100;
  const SynthData synth = generate_synthetic(sc);
  const Dataset ds = normalize(synth.dataset);
  const DataSplit split = split_sequential(ds.steps, 0.6, 0.2);
  const SpinModel model(testing::small_spin(1, 1, 4), ds.nodes);
  TrainConfig cfg = quick_config();
  cfg.epochs_max = 10;
  cfg.patience = 1;
  cfg.lr = 0.0;
  const TrainResult r = train(model, ds, synth.graph, split, cfg);
  CHECK(r.history.size() == 2);
  CHECK(r.stopped_early);
  CHECK(r.best_epoch == 1);
}

TEST_CASE("a constant series is learned") {
  const Dataset ds = normalized_dataset(200, 3, [](std::size_t, std::size_t) { return 0.7; });
  const SensorGraph g(3, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 0, 1.0}});
  const DataSplit split = split_sequential(ds.steps, 0.7, 0.15);
  const SpinModel model(testing::small_spin(2, 1, 8), ds.nodes);
  TrainConfig cfg;
  cfg.epochs_max = 20;
  cfg.patience = 20;
  cfg.batches_per_epoch = 10;
  cfg.batch_size = 4;
  cfg.window = 8;
  cfg.lr = 0.01;
  cfg.warmup = 5;
  const TrainResult r = train(model, ds, g, split, cfg);
  CHECK(r.history.size() == 20);
  double best = 1e9;
  for (const HistoryRow& h : r.history) best = std::min(best, h.val_mae);
  CHECK(best < 0.01);
  CHECK(validation_mae(model, r.best, ds, g, split.validation, 8, cfg.validation_seed) == best);
}

TEST_CASE("evaluation is a pure function of its inputs") {
  SynthConfig sc;
  sc.nodes = 4;
  sc.steps = 60;
  SynthData synth = generate_synthetic(sc);
  Dataset ds = normalize(apply_injection(synth.dataset, inject_point_missing(synth.dataset.mask, 0.3, 1)));
  const SpinModel model(testing::small_spin(2, 1, 6), ds.nodes);
  const ParameterStore p = model.initialize(2);
  const auto a = evaluate(model, p, ds, synth.graph, StepRange{0, 60}, 12);
  const auto b = evaluate(model, p, ds, synth.graph, StepRange{0, 60}, 12);
  CHECK(a.per_window == b.per_window);
  CHECK(a.per_window.size() == 5);
  const auto full = impute_dataset(model, p, ds, synth.graph, 25);
  for (std::size_t k = 0; k < full.size(); ++k) {
    CHECK(std::isfinite(full[k]));
    if (ds.mask.bits[k]) CHECK(full[k] == ds.values[k]);
  }
}
