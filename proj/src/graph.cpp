#include "spin/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <string>

#include "spin/csv.hpp"
#include "spin/errors.hpp"

namespace spin {

SensorGraph::SensorGraph(std::size_t node_count, std::vector<Edge> edges,
                         std::optional<Tensor> distances)
    : node_count_(node_count), edges_(std::move(edges)), distances_(std::move(distances)) {
  for (const Edge& e : edges_) {
    if (e.src >= node_count_ || e.dst >= node_count_) {
      throw ValidationError("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                            ") references a node outside [0," + std::to_string(node_count_) +
                            ")");
    }
    if (e.src == e.dst) {
      throw ValidationError("self-loop on node " + std::to_string(e.src));
    }
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
      throw ValidationError("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                            ") has non-positive weight");
    }
  }
  std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
    return a.dst != b.dst ? a.dst < b.dst : a.src < b.src;
  });
  for (std::size_t k = 1; k < edges_.size(); ++k) {
    if (edges_[k].dst == edges_[k - 1].dst && edges_[k].src == edges_[k - 1].src) {
      throw ValidationError("duplicate edge (" + std::to_string(edges_[k].src) + "," +
                            std::to_string(edges_[k].dst) + ")");
    }
  }
  offsets_.assign(node_count_ + 1, 0);
  for (const Edge& e : edges_) ++offsets_[e.dst + 1];
  for (std::size_t i = 0; i < node_count_; ++i) offsets_[i + 1] += offsets_[i];
  senders_.reserve(edges_.size());
  for (const Edge& e : edges_) senders_.push_back(Neighbor{e.src, e.weight});
  if (distances_ && (distances_->shape().rank() != 2 || distances_->rows() != node_count_ ||
                     distances_->cols() != node_count_)) {
    throw DimensionError("distance matrix " + distances_->shape().str() + " does not match " +
                         std::to_string(node_count_) + " nodes");
  }
}

std::span<const Neighbor> SensorGraph::in_neighbors(std::size_t i) const {
  if (i >= node_count_) {
    throw ValidationError("node " + std::to_string(i) + " outside graph of " +
                          std::to_string(node_count_) + " nodes");
  }
  return {senders_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
}

SensorGraph SensorGraph::permuted(std::span<const std::size_t> perm) const {
  if (perm.size() != node_count_) {
    throw DimensionError("permutation of length " + std::to_string(perm.size()) + " for " +
                         std::to_string(node_count_) + " nodes");
  }
  std::vector<bool> seen(node_count_, false);
  for (std::size_t p : perm) {
    if (p >= node_count_ || seen[p]) throw ValidationError("not a permutation");
    seen[p] = true;
  }
  std::vector<Edge> edges;
  edges.reserve(edges_.size());
  for (const Edge& e : edges_) edges.push_back(Edge{perm[e.src], perm[e.dst], e.weight});
  std::optional<Tensor> dist;
  if (distances_) {
    Tensor d(distances_->shape());
    for (std::size_t i = 0; i < node_count_; ++i) {
      for (std::size_t j = 0; j < node_count_; ++j) d.at(perm[i], perm[j]) = distances_->at(i, j);
    }
    dist = std::move(d);
  }
  return SensorGraph(node_count_, std::move(edges), std::move(dist));
}

SensorGraph build_adjacency_gaussian(const Tensor& distances, double gamma, double delta) {
  if (!(gamma > 0.0)) throw ValidationError("gaussian kernel needs gamma > 0");
  if (distances.shape().rank() != 2 || distances.rows() != distances.cols()) {
    throw DimensionError("distance matrix must be square, got " + distances.shape().str());
  }
  const std::size_t n = distances.rows();
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = distances.at(i, j);
      if (d < 0.0 || !std::isfinite(d)) {
        throw ValidationError("negative or non-finite distance at (" + std::to_string(i) + "," +
                              std::to_string(j) + ")");
      }
      if (i == j || d > delta) continue;
      const double w = std::exp(-(d * d) / gamma);
      // exp underflows to 0 for far pairs inside a loose threshold: no edge.
      if (w > 0.0) edges.push_back(Edge{i, j, w});
    }
  }
  return SensorGraph(n, std::move(edges), distances);
}

std::optional<std::size_t> Subgraph::local_index(std::size_t parent_node) const {
  auto it = std::lower_bound(original.begin(), original.end(), parent_node);
  if (it == original.end() || *it != parent_node) return std::nullopt;
  return static_cast<std::size_t>(it - original.begin());
}

Subgraph khop_subgraph(const SensorGraph& graph, std::span<const std::size_t> seeds,
                       std::size_t k) {
  if (seeds.empty()) throw ValidationError("khop_subgraph needs at least one seed");
  const std::size_t n = graph.node_count();
  constexpr std::size_t kUnvisited = static_cast<std::size_t>(-1);
  std::vector<std::size_t> depth(n, kUnvisited);
  std::deque<std::size_t> frontier;
  for (std::size_t s : seeds) {
    if (s >= n) throw ValidationError("unknown seed node " + std::to_string(s));
    if (depth[s] == kUnvisited) {
      depth[s] = 0;
      frontier.push_back(s);
    }
  }
  while (!frontier.empty()) {
    const std::size_t v = frontier.front();
    frontier.pop_front();
    if (depth[v] == k) continue;
    for (const Neighbor& nb : graph.in_neighbors(v)) {
      if (depth[nb.node] == kUnvisited) {
        depth[nb.node] = depth[v] + 1;
        frontier.push_back(nb.node);
      }
    }
  }
  Subgraph sub;
  std::vector<std::size_t> local(n, kUnvisited);
  for (std::size_t v = 0; v < n; ++v) {
    if (depth[v] != kUnvisited) {
      local[v] = sub.original.size();
      sub.original.push_back(v);
    }
  }
  sub.is_seed.assign(sub.original.size(), false);
  for (std::size_t s : seeds) sub.is_seed[local[s]] = true;
  std::vector<Edge> edges;
  for (const Edge& e : graph.edges()) {
    if (local[e.src] != kUnvisited && local[e.dst] != kUnvisited) {
      edges.push_back(Edge{local[e.src], local[e.dst], e.weight});
    }
  }
  sub.graph = SensorGraph(sub.original.size(), std::move(edges));
  return sub;
}

SensorGraph read_edge_csv(const std::filesystem::path& path, std::size_t node_count) {
  const auto rows = csv::read(path);
  if (rows.empty() || rows.front() != csv::Row{"src", "dst", "weight"}) {
    throw ValidationError("edge list '" + path.string() + "' must start with header src,dst,weight");
  }
  std::vector<Edge> edges;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = path.string() + " line " + std::to_string(r + 1);
    if (row.size() != 3) throw ValidationError("expected 3 columns at " + where);
    double src = 0, dst = 0, w = 0;
    if (!csv::parse_number(row[0], src, where) || !csv::parse_number(row[1], dst, where) ||
        !csv::parse_number(row[2], w, where)) {
      throw ValidationError("missing field at " + where);
    }
    if (src < 0 || dst < 0 || src != std::floor(src) || dst != std::floor(dst)) {
      throw ValidationError("node ids must be non-negative integers at " + where);
    }
    edges.push_back(Edge{static_cast<std::size_t>(src), static_cast<std::size_t>(dst), w});
  }
  return SensorGraph(node_count, std::move(edges));
}

void write_edge_csv(const std::filesystem::path& path, const SensorGraph& graph) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << "src,dst,weight\n";
  for (const Edge& e : graph.edges()) {
    out << e.src << ',' << e.dst << ',' << csv::format_number(e.weight) << '\n';
  }
}

Tensor read_distance_csv(const std::filesystem::path& path) {
  const auto rows = csv::read(path);
  const std::size_t n = rows.size();
  Tensor d(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != n) {
      throw ValidationError("distance matrix '" + path.string() + "' row " +
                            std::to_string(i + 1) + " has " + std::to_string(rows[i].size()) +
                            " columns, expected " + std::to_string(n));
    }
    for (std::size_t j = 0; j < n; ++j) {
      const std::string where = path.string() + " row " + std::to_string(i + 1) + " col " +
                                std::to_string(j + 1);
      if (!csv::parse_number(rows[i][j], d.at(i, j), where)) {
        throw ValidationError("missing distance at " + where);
      }
    }
  }
  return d;
}

void write_distance_csv(const std::filesystem::path& path, const Tensor& distances) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  for (std::size_t i = 0; i < distances.rows(); ++i) {
    for (std::size_t j = 0; j < distances.cols(); ++j) {
      out << (j ? "," : "") << csv::format_number(distances.at(i, j));
    }
    out << '\n';
  }
}

}  // namespace spin
