#include "spin/parameters.hpp"

#include <cmath>
#include <fstream>

#include "spin/errors.hpp"

namespace spin {

Tensor& ParameterStore::add(const std::string& name, Tensor init) {
  auto [it, inserted] = entries_.emplace(name, std::move(init));
  if (!inserted) throw ValidationError("duplicate parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

nlohmann::json ParameterStore::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [name, t] : entries_) {
    std::vector<std::size_t> shape;
    for (std::size_t a = 0; a < t.shape().rank(); ++a) shape.push_back(t.shape()[a]);
    doc[name] = {{"shape", shape},
                 {"data", std::vector<double>(t.values().begin(), t.values().end())}};
  }
  return doc;
}

ParameterStore ParameterStore::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("checkpoint must be a JSON object");
  ParameterStore store;
  for (const auto& [name, entry] : doc.items()) {
    if (!entry.contains("shape") || !entry.contains("data")) {
      throw ValidationError("checkpoint entry '" + name + "' needs shape and data");
    }
    const auto dims = entry.at("shape").get<std::vector<std::size_t>>();
    Shape shape;
    switch (dims.size()) {
      case 0: shape = Shape{}; break;
      case 1: shape = Shape{dims[0]}; break;
      case 2: shape = Shape{dims[0], dims[1]}; break;
      case 3: shape = Shape{dims[0], dims[1], dims[2]}; break;
      default:
        throw ValidationError("checkpoint entry '" + name + "' has rank > 3");
    }
    store.add(name, Tensor(shape, entry.at("data").get<std::vector<double>>()));
  }
  return store;
}

void ParameterStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write checkpoint '" + path.string() + "'");
  out << to_json().dump();
}

ParameterStore ParameterStore::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

void ParameterStore::require_same_layout(const ParameterStore& other) const {
  for (const auto& [name, t] : entries_) {
    auto it = other.entries_.find(name);
    if (it == other.entries_.end()) {
      throw ValidationError("checkpoint is missing parameter '" + name + "'");
    }
    if (!(it->second.shape() == t.shape())) {
      throw ValidationError("parameter '" + name + "' has shape " + it->second.shape().str() +
                            ", model expects " + t.shape().str());
    }
  }
  for (const auto& [name, _] : other.entries_) {
    if (!entries_.count(name)) {
      throw ValidationError("checkpoint has unexpected parameter '" + name + "'");
    }
  }
}

Value BoundParameters::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Value v = tape_.leaf(store_.at(name), requires_grad_);
  bound_.emplace(name, v);
  return v;
}

GradientMap BoundParameters::gradients() const {
  GradientMap out;
  for (const auto& [name, t] : store_.entries()) {
    auto it = bound_.find(name);
    out.emplace(name, it == bound_.end() ? Tensor(t.shape(), 0.0) : it->second.grad());
  }
  return out;
}

Tensor uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(shape);
  for (double& x : t.values()) x = dist(rng);
  return t;
}

void accumulate_gradients(GradientMap& total, const GradientMap& add) {
  for (const auto& [name, g] : add) {
    auto it = total.find(name);
    if (it == total.end()) {
      total.emplace(name, g);
      continue;
    }
    require_same_shape(it->second.shape(), g.shape(), "accumulate_gradients");
    for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += g[i];
  }
}

void scale_gradients(GradientMap& grads, double factor) {
  for (auto& [_, g] : grads) {
    for (double& x : g.values()) x *= factor;
  }
}

double global_norm(const GradientMap& grads) {
  double s = 0.0;
  for (const auto& [_, g] : grads) {
    for (double x : g.values()) s += x * x;
  }
  return std::sqrt(s);
}

double clip_global_norm(GradientMap& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm && norm > 0.0) scale_gradients(grads, max_norm / norm);
  return norm;
}

}  // namespace spin
