#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spin/autodiff.hpp"
#include "spin/parameters.hpp"

namespace spin {

// Layer widths of a perceptron: widths.front() inputs, widths.back() outputs.
// Rectifier on hidden layers, identity on the output layer.
struct MlpSpec {
  std::vector<std::size_t> widths;

  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  std::size_t layer_count() const { return widths.size() - 1; }

  // in -> hidden -> out: the perceptron shape used throughout the model.
  static MlpSpec two_layer(std::size_t in, std::size_t hidden, std::size_t out) {
    return MlpSpec{{in, hidden, out}};
  }
};

// A perceptron whose parameters live in a ParameterStore under
// "<prefix>.l<k>.weight" ([in, out]) and "<prefix>.l<k>.bias" ([out]).
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string prefix, MlpSpec spec);

  const std::string& prefix() const { return prefix_; }
  const MlpSpec& spec() const { return spec_; }
  std::string weight_name(std::size_t layer) const;
  std::string bias_name(std::size_t layer) const;

  void initialize(ParameterStore& store, std::mt19937_64& rng) const;

  // Concatenates inputs along the feature axis and runs every layer.
  Value apply(BoundParameters& params, std::span<const Value> inputs) const;
  Value apply(BoundParameters& params, const Value& input) const {
    return apply(params, std::span<const Value>(&input, 1));
  }

 private:
  std::string prefix_;
  MlpSpec spec_;
};

// Free-function form of Mlp::apply.
inline Value mlp_apply(const Mlp& mlp, BoundParameters& params, std::span<const Value> inputs) {
  return mlp.apply(params, inputs);
}

}  // namespace spin
