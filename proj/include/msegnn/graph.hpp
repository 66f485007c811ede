#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msegnn/tensor.hpp"

namespace msegnn {

using Edge = std::pair<std::size_t, std::size_t>;

// Undirected attributed graph with an optional node-level ground-truth
// explanation. Immutable after construction; the constructor validates
// every invariant and throws ValidationError on violation.
class Graph {
 public:
  // `directed_edges` lists each undirected edge in both directions; a pair
  // without its reverse is rejected as a non-symmetric adjacency.
  Graph(std::int64_t id, std::size_t num_nodes, std::size_t feature_dim,
        std::vector<double> features, std::span<const Edge> directed_edges, int label,
        std::optional<std::vector<std::uint8_t>> truth_mask = std::nullopt);

  // Convenience: each {u, v} is inserted in both directions.
  static Graph from_undirected(std::int64_t id, std::size_t num_nodes,
                               std::size_t feature_dim, std::vector<double> features,
                               std::span<const Edge> edges, int label,
                               std::optional<std::vector<std::uint8_t>> truth_mask =
                                   std::nullopt);

  std::int64_t id() const { return id_; }
  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t feature_dim() const { return feature_dim_; }
  int label() const { return label_; }
  std::size_t num_edges() const { return num_edges_; }  // undirected count
  std::size_t degree(std::size_t v) const;
  bool has_edge(std::size_t u, std::size_t v) const {
    return adjacency_[u * num_nodes_ + v] != 0;
  }

  std::span<const double> features() const { return features_; }
  std::span<const std::uint8_t> adjacency() const { return adjacency_; }
  const std::optional<std::vector<std::uint8_t>>& truth_mask() const { return truth_mask_; }

  // Both directions, sorted row-major.
  std::vector<Edge> directed_edges() const;
  // u < v, sorted.
  std::vector<Edge> undirected_edges() const;

  Tensor feature_tensor() const;   // [n, d]
  Tensor adjacency_tensor() const;  // [n, n] 0/1
  // Row-normalised adjacency D^-1 A (isolated nodes give zero rows).
  Tensor mean_adjacency_tensor() const;

  // Same graph with node v renamed to perm[v].
  Graph permuted(std::span<const std::size_t> perm) const;
  Graph with_label(int label) const;

  bool operator==(const Graph& other) const = default;

 private:
  std::int64_t id_;
  std::size_t num_nodes_;
  std::size_t feature_dim_;
  std::vector<double> features_;
  std::vector<std::uint8_t> adjacency_;
  std::size_t num_edges_ = 0;
  int label_;
  std::optional<std::vector<std::uint8_t>> truth_mask_;
};

// A collection of graphs sharing a feature dimension, indexed by class.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t feature_dim, std::size_t num_classes, std::vector<Graph> graphs,
          std::string generator_json = "");

  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t size() const { return graphs_.size(); }
  const std::vector<Graph>& graphs() const { return graphs_; }
  const Graph& operator[](std::size_t i) const { return graphs_[i]; }
  // Indices of the graphs labelled `cls`, in storage order.
  const std::vector<std::size_t>& indices_of_class(int cls) const;
  bool has_truth_masks() const;
  // Generator settings recorded with the data, serialised JSON or empty.
  const std::string& generator_json() const { return generator_json_; }

  double mean_nodes() const;
  double mean_edges() const;

  bool operator==(const Dataset& other) const {
    return feature_dim_ == other.feature_dim_ && num_classes_ == other.num_classes_ &&
           graphs_ == other.graphs_;
  }

 private:
  std::size_t feature_dim_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<Graph> graphs_;
  std::vector<std::vector<std::size_t>> by_class_;
  std::string generator_json_;
};

}  // namespace msegnn
