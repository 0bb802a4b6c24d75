#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "spin/autodiff.hpp"
#include "spin/mlp.hpp"
#include "spin/parameters.hpp"

namespace spin {

struct EncodingConfig {
  std::vector<std::int64_t> periods{24};
  std::size_t spatial_dim = 16;  // d_v
  std::size_t output_dim = 32;   // d_q
  std::size_t hidden = 32;
  // Skip the fusion MLP: q = [u, v] and output_dim must equal d_u + d_v.
  bool identity_fusion = false;

  std::size_t temporal_dim() const { return 2 * periods.size(); }
  void validate() const;
};

// [sin(2 pi t / P), cos(2 pi t / P)] for every period P, concatenated.
std::vector<double> temporal_encoding(std::int64_t step, std::span<const std::int64_t> periods);

// q(t, i) = rho([u_t, v_i]) with a learnable row v_i per node.
class PositionalEncoder {
 public:
  PositionalEncoder() = default;
  PositionalEncoder(EncodingConfig config, std::size_t node_count);

  const EncodingConfig& config() const { return config_; }
  std::size_t node_count() const { return node_count_; }
  static constexpr const char* kSpatialName = "encoding.spatial";

  void initialize(ParameterStore& store, std::mt19937_64& rng) const;

  // Encodings for every (step, node) pair, row t * nodes.size() + n.
  Value encode(BoundParameters& params, std::span<const std::int64_t> steps,
               std::span<const std::size_t> nodes) const;
  // Single coordinate, shape [1, d_q].
  Value positional_encoding(BoundParameters& params, std::int64_t step, std::size_t node) const;

 private:
  EncodingConfig config_;
  std::size_t node_count_ = 0;
  Mlp fusion_;
};

}  // namespace spin
