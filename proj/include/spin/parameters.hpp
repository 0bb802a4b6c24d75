#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <random>
#include <string>

#include "json.hpp"

#include "spin/autodiff.hpp"
#include "spin/tensor.hpp"

namespace spin {

// Named trainable arrays. Names are dotted paths ("module.block.layer.kind");
// ordered iteration keeps optimizer updates and serialization deterministic.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  const std::map<std::string, Tensor>& entries() const { return entries_; }
  std::size_t scalar_count() const;

  // Checkpoint format: {"name": {"shape": [...], "data": [row-major values]}}.
  nlohmann::json to_json() const;
  static ParameterStore from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static ParameterStore load(const std::filesystem::path& path);

  // Throws ValidationError naming the first missing, extra or mis-shaped entry.
  void require_same_layout(const ParameterStore& other) const;

 private:
  std::map<std::string, Tensor> entries_;
};

using GradientMap = std::map<std::string, Tensor>;

// Parameters exposed as leaves of one tape. Each name is bound at most once,
// on first use, so a parameter read by several ops accumulates one gradient.
class BoundParameters {
 public:
  BoundParameters(Tape& tape, const ParameterStore& store, bool requires_grad = true)
      : tape_(tape), store_(store), requires_grad_(requires_grad) {}

  Value operator()(const std::string& name);
  Tape& tape() { return tape_; }
  const ParameterStore& store() const { return store_; }

  // Gradients of every bound parameter after Tape::backward. Parameters that
  // were never bound are reported as zeros so the map covers the whole store.
  GradientMap gradients() const;

 private:
  Tape& tape_;
  const ParameterStore& store_;
  bool requires_grad_;
  std::map<std::string, Value> bound_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

void accumulate_gradients(GradientMap& total, const GradientMap& add);
void scale_gradients(GradientMap& grads, double factor);
double global_norm(const GradientMap& grads);
// Rescales so the global L2 norm is at most max_norm. Returns the norm before clipping.
double clip_global_norm(GradientMap& grads, double max_norm);

}  // namespace spin
