#include "spin/mlp.hpp"

#include "spin/errors.hpp"

namespace spin {

Mlp::Mlp(std::string prefix, MlpSpec spec) : prefix_(std::move(prefix)), spec_(std::move(spec)) {
  if (spec_.widths.size() < 2) {
    throw ValidationError("MLP '" + prefix_ + "' needs at least an input and an output width");
  }
  for (std::size_t w : spec_.widths) {
    if (w == 0) throw ValidationError("MLP '" + prefix_ + "' has a zero width");
  }
}

std::string Mlp::weight_name(std::size_t layer) const {
  return prefix_ + ".l" + std::to_string(layer) + ".weight";
}

std::string Mlp::bias_name(std::size_t layer) const {
  return prefix_ + ".l" + std::to_string(layer) + ".bias";
}

void Mlp::initialize(ParameterStore& store, std::mt19937_64& rng) const {
  for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
    const std::size_t in = spec_.widths[l];
    const std::size_t out = spec_.widths[l + 1];
    store.add(weight_name(l), uniform_init(Shape{in, out}, in, rng));
    store.add(bias_name(l), uniform_init(Shape{out}, in, rng));
  }
}

Value Mlp::apply(BoundParameters& params, std::span<const Value> inputs) const {
  if (inputs.empty()) throw DimensionError("MLP '" + prefix_ + "' called without inputs");
  Value x = inputs.size() == 1 ? inputs.front() : concat_cols(inputs);
  if (x.data().cols() != spec_.input_width()) {
    throw DimensionError("MLP '" + prefix_ + "' expects " + std::to_string(spec_.input_width()) +
                         " input features, got " + std::to_string(x.data().cols()) +
                         " (shape " + x.shape().str() + ")");
  }
  for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
    x = linear(x, params(weight_name(l)), params(bias_name(l)));
    if (l + 1 < spec_.layer_count()) x = relu(x);
  }
  return x;
}

}  // namespace spin
