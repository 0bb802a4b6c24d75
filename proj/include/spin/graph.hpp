#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "spin/tensor.hpp"

namespace spin {

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  double weight = 0.0;
};

struct Neighbor {
  std::size_t node = 0;
  double weight = 0.0;
};

// Weighted directed sensor graph. An edge (j, i) carries messages from j to i,
// so in_neighbors(i) are the senders aggregated at node i. Immutable.
class SensorGraph {
 public:
  SensorGraph() = default;
  // Throws ValidationError on out-of-range ids, self-loops, duplicate edges
  // or non-positive weights.
  SensorGraph(std::size_t node_count, std::vector<Edge> edges,
              std::optional<Tensor> distances = std::nullopt);

  std::size_t node_count() const { return node_count_; }
  std::size_t edge_count() const { return edges_.size(); }
  // Sorted by (dst, src).
  const std::vector<Edge>& edges() const { return edges_; }
  // Senders j of edges (j, i) in ascending j.
  std::span<const Neighbor> in_neighbors(std::size_t i) const;
  const std::optional<Tensor>& distances() const { return distances_; }

  // Relabels node i as perm[i].
  SensorGraph permuted(std::span<const std::size_t> perm) const;

 private:
  std::size_t node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_;  // CSR over dst
  std::vector<Neighbor> senders_;
  std::optional<Tensor> distances_;
};

// a(i,j) = exp(-dist(i,j)^2 / gamma) when dist(i,j) <= delta, no edge otherwise.
// The diagonal is skipped.
SensorGraph build_adjacency_gaussian(const Tensor& distances, double gamma, double delta);

struct Subgraph {
  SensorGraph graph;
  std::vector<std::size_t> original;  // local id -> id in the parent graph, ascending
  std::vector<bool> is_seed;          // per local id

  // Local id of a parent node, if it belongs to the subgraph.
  std::optional<std::size_t> local_index(std::size_t parent_node) const;
};

// All nodes that can reach a seed within k edges (traversing edges backwards
// from the seeds), with the induced edges.
Subgraph khop_subgraph(const SensorGraph& graph, std::span<const std::size_t> seeds,
                       std::size_t k);

// "src,dst,weight" with 0-based ids.
SensorGraph read_edge_csv(const std::filesystem::path& path, std::size_t node_count);
void write_edge_csv(const std::filesystem::path& path, const SensorGraph& graph);
// N rows of N comma-separated numbers, no header.
Tensor read_distance_csv(const std::filesystem::path& path);
void write_distance_csv(const std::filesystem::path& path, const Tensor& distances);

}  // namespace spin
