#include <cmath>
#include <random>

#include "doctest.h"
#include "spin/encoding.hpp"
#include "spin/errors.hpp"

using namespace spin;

TEST_CASE("temporal encoding values") {
  const std::int64_t p24[] = {24};
  const auto at0 = temporal_encoding(0, p24);
  CHECK(at0 == std::vector<double>{0.0, 1.0});
  const auto quarter = temporal_encoding(6, p24);
  CHECK(quarter[0] == doctest::Approx(1.0));
  CHECK(std::fabs(quarter[1]) < 1e-15);
  const std::int64_t two[] = {24, 12};
  CHECK(temporal_encoding(3, two).size() == 4);
  const std::int64_t bad[] = {0};
  CHECK_THROWS_AS(temporal_encoding(1, bad), ValidationError);
}

TEST_CASE("temporal encoding is periodic") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::int64_t periods[] = {std::int64_t(1 + rng() % 50), std::int64_t(1 + rng() % 300)};
    const std::int64_t t = std::int64_t(rng() % 100000) - 50000;
    const std::int64_t k = std::int64_t(rng() % 7) - 3;
    CHECK(temporal_encoding(t, periods) ==
          temporal_encoding(t + k * periods[0] * periods[1], periods));
    CHECK(temporal_encoding(t, std::span(periods, 1)) ==
          temporal_encoding(t + periods[0], std::span(periods, 1)));
  }
}

TEST_CASE("positional encoder") {
  EncodingConfig cfg;
  cfg.spatial_dim = 4;
  cfg.output_dim = 6;
  cfg.hidden = 8;
  const PositionalEncoder enc(cfg, 5);
  ParameterStore store;
  std::mt19937_64 rng(1);
  enc.initialize(store, rng);
  Tape tape;
  BoundParameters params(tape, store);
  const std::int64_t steps[] = {3, 4};
  const std::size_t nodes[] = {0, 1, 2};
  const Value q = enc.encode(params, steps, nodes);
  CHECK(q.shape() == Shape{6, 6});

  SUBCASE("distinct nodes get distinct encodings at the same step") {
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = a + 1; b < 3; ++b) {
        bool differs = false;
        for (std::size_t c = 0; c < 6; ++c) differs = differs || q.data().at(a, c) != q.data().at(b, c);
        CHECK(differs);
      }
    }
  }
  SUBCASE("batched rows equal single-coordinate encodings") {
    const Value one = enc.positional_encoding(params, 4, 2);
    for (std::size_t c = 0; c < 6; ++c) CHECK(one.data()[c] == q.data().at(5, c));
  }
  SUBCASE("unknown node") {
    const std::size_t bad[] = {5};
    CHECK_THROWS_AS(enc.encode(params, steps, bad), ValidationError);
  }
}

TEST_CASE("identity fusion concatenates the parts") {
  EncodingConfig cfg;
  cfg.periods = {24};
  cfg.spatial_dim = 3;
  cfg.output_dim = 5;
  cfg.identity_fusion = true;
  const PositionalEncoder enc(cfg, 2);
  ParameterStore store;
  std::mt19937_64 rng(1);
  enc.initialize(store, rng);
  CHECK(store.entries().size() == 1);
  Tape tape;
  BoundParameters params(tape, store);
  const Value q = enc.positional_encoding(params, 6, 1);
  CHECK(q.data()[0] == doctest::Approx(1.0));
  for (std::size_t c = 0; c < 3; ++c) CHECK(q.data()[2 + c] == store.at(PositionalEncoder::kSpatialName).at(1, c));

  cfg.output_dim = 4;
  CHECK_THROWS_AS(PositionalEncoder(cfg, 2), ValidationError);
}
