#include "spin/encoding.hpp"

#include <cmath>
#include <numbers>

#include "spin/errors.hpp"

namespace spin {

void EncodingConfig::validate() const {
  if (periods.empty()) throw ValidationError("encoding needs at least one period");
  for (auto p : periods) {
    if (p <= 0) throw ValidationError("encoding periods must be positive");
  }
  if (spatial_dim == 0 || output_dim == 0 || hidden == 0) {
    throw ValidationError("encoding dimensions must be positive");
  }
  if (identity_fusion && output_dim != temporal_dim() + spatial_dim) {
    throw ValidationError("identity fusion needs output_dim = 2 * periods + spatial_dim");
  }
}

std::vector<double> temporal_encoding(std::int64_t step, std::span<const std::int64_t> periods) {
  if (periods.empty()) throw ValidationError("temporal encoding needs at least one period");
  std::vector<double> u;
  u.reserve(2 * periods.size());
  for (std::int64_t p : periods) {
    if (p <= 0) throw ValidationError("temporal encoding period must be positive");
    // Reduce first so that step and step + P give bit-identical phases.
    const std::int64_t r = ((step % p) + p) % p;
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(p);
    u.push_back(std::sin(phase));
    u.push_back(std::cos(phase));
  }
  return u;
}

PositionalEncoder::PositionalEncoder(EncodingConfig config, std::size_t node_count)
    : config_(std::move(config)), node_count_(node_count) {
  config_.validate();
  if (node_count_ == 0) throw ValidationError("positional encoder needs at least one node");
  if (!config_.identity_fusion) {
    fusion_ = Mlp("encoding.rho",
                  MlpSpec::two_layer(config_.temporal_dim() + config_.spatial_dim, config_.hidden,
                                     config_.output_dim));
  }
}

void PositionalEncoder::initialize(ParameterStore& store, std::mt19937_64& rng) const {
  std::normal_distribution<double> gauss(0.0, 0.1);
  Tensor spatial(Shape{node_count_, config_.spatial_dim});
  for (double& x : spatial.values()) x = gauss(rng);
  store.add(kSpatialName, std::move(spatial));
  if (!config_.identity_fusion) fusion_.initialize(store, rng);
}

Value PositionalEncoder::encode(BoundParameters& params, std::span<const std::int64_t> steps,
                                std::span<const std::size_t> nodes) const {
  const std::size_t du = config_.temporal_dim();
  Tensor u(Shape{steps.size() * nodes.size(), du});
  std::vector<std::size_t> node_rows;
  node_rows.reserve(steps.size() * nodes.size());
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const auto enc = temporal_encoding(steps[t], config_.periods);
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      if (nodes[n] >= node_count_) {
        throw ValidationError("node " + std::to_string(nodes[n]) + " has no spatial embedding (" +
                              std::to_string(node_count_) + " nodes)");
      }
      std::copy(enc.begin(), enc.end(), u.row(t * nodes.size() + n).begin());
      node_rows.push_back(nodes[n]);
    }
  }
  const Value parts[] = {params.tape().constant(std::move(u)),
                         gather_rows(params(kSpatialName), node_rows)};
  if (config_.identity_fusion) return concat_cols(parts);
  return fusion_.apply(params, parts);
}

Value PositionalEncoder::positional_encoding(BoundParameters& params, std::int64_t step,
                                             std::size_t node) const {
  const std::int64_t steps[] = {step};
  const std::size_t nodes[] = {node};
  return encode(params, steps, nodes);
}

}  // namespace spin
