#include "msegnn/graph.hpp"

#include <algorithm>

#include "msegnn/error.hpp"

namespace msegnn {

namespace {

std::string graph_tag(std::int64_t id) { return "graph " + std::to_string(id) + ": "; }

}  // namespace

Graph::Graph(std::int64_t id, std::size_t num_nodes, std::size_t feature_dim,
             std::vector<double> features, std::span<const Edge> directed_edges,
             int label, std::optional<std::vector<std::uint8_t>> truth_mask)
    : id_(id),
      num_nodes_(num_nodes),
      feature_dim_(feature_dim),
      features_(std::move(features)),
      adjacency_(num_nodes * num_nodes, 0),
      label_(label),
      truth_mask_(std::move(truth_mask)) {
  const std::string tag = graph_tag(id);
  if (num_nodes_ == 0) throw ValidationError(tag + "graph has no nodes");
  if (feature_dim_ == 0) throw ValidationError(tag + "feature dimension is zero");
  if (features_.size() != num_nodes_ * feature_dim_) {
    throw ValidationError(tag + "features hold " + std::to_string(features_.size()) +
                          " values, expected " + std::to_string(num_nodes_) + "x" +
                          std::to_string(feature_dim_));
  }
  if (label_ < 0) throw ValidationError(tag + "negative label");
  for (const auto& [u, v] : directed_edges) {
    if (u >= num_nodes_ || v >= num_nodes_) {
      throw ValidationError(tag + "edge [" + std::to_string(u) + "," + std::to_string(v) +
                            "] references a node outside 0.." +
                            std::to_string(num_nodes_ - 1));
    }
    if (u == v) throw ValidationError(tag + "self-loop at node " + std::to_string(u));
    auto& cell = adjacency_[u * num_nodes_ + v];
    if (cell) {
      throw ValidationError(tag + "duplicate edge [" + std::to_string(u) + "," +
                            std::to_string(v) + "]");
    }
    cell = 1;
  }
  for (std::size_t u = 0; u < num_nodes_; ++u) {
    for (std::size_t v = u + 1; v < num_nodes_; ++v) {
      if (adjacency_[u * num_nodes_ + v] != adjacency_[v * num_nodes_ + u]) {
        throw ValidationError(tag + "adjacency is not symmetric at [" + std::to_string(u) +
                              "," + std::to_string(v) + "]");
      }
      num_edges_ += adjacency_[u * num_nodes_ + v];
    }
  }
  if (truth_mask_) {
    const auto& m = *truth_mask_;
    if (m.size() != num_nodes_) {
      throw ValidationError(tag + "truth_mask has length " + std::to_string(m.size()) +
                            ", expected " + std::to_string(num_nodes_));
    }
    bool ones = false;
    bool zeros = false;
    for (auto x : m) {
      if (x > 1) throw ValidationError(tag + "truth_mask entries must be 0 or 1");
      ones = ones || x == 1;
      zeros = zeros || x == 0;
    }
    if (!ones || !zeros) {
      throw ValidationError(tag + "truth_mask must contain both 0 and 1 entries");
    }
  }
}

Graph Graph::from_undirected(std::int64_t id, std::size_t num_nodes,
                             std::size_t feature_dim, std::vector<double> features,
                             std::span<const Edge> edges, int label,
                             std::optional<std::vector<std::uint8_t>> truth_mask) {
  std::vector<Edge> directed;
  directed.reserve(edges.size() * 2);
  for (const auto& [u, v] : edges) {
    directed.emplace_back(u, v);
    directed.emplace_back(v, u);
  }
  return Graph(id, num_nodes, feature_dim, std::move(features), directed, label,
               std::move(truth_mask));
}

std::size_t Graph::degree(std::size_t v) const {
  std::size_t d = 0;
  for (std::size_t u = 0; u < num_nodes_; ++u) d += adjacency_[v * num_nodes_ + u];
  return d;
}

std::vector<Edge> Graph::directed_edges() const {
  std::vector<Edge> out;
  for (std::size_t u = 0; u < num_nodes_; ++u)
    for (std::size_t v = 0; v < num_nodes_; ++v)
      if (adjacency_[u * num_nodes_ + v]) out.emplace_back(u, v);
  return out;
}

std::vector<Edge> Graph::undirected_edges() const {
  std::vector<Edge> out;
  for (std::size_t u = 0; u < num_nodes_; ++u)
    for (std::size_t v = u + 1; v < num_nodes_; ++v)
      if (adjacency_[u * num_nodes_ + v]) out.emplace_back(u, v);
  return out;
}

Tensor Graph::feature_tensor() const {
  return Tensor::from({num_nodes_, feature_dim_}, features_);
}

Tensor Graph::adjacency_tensor() const {
  return Tensor::from({num_nodes_, num_nodes_},
                      std::vector<double>(adjacency_.begin(), adjacency_.end()));
}

Tensor Graph::mean_adjacency_tensor() const {
  std::vector<double> a(adjacency_.begin(), adjacency_.end());
  for (std::size_t u = 0; u < num_nodes_; ++u) {
    const std::size_t d = degree(u);
    if (d == 0) continue;
    for (std::size_t v = 0; v < num_nodes_; ++v)
      a[u * num_nodes_ + v] /= static_cast<double>(d);
  }
  return Tensor::from({num_nodes_, num_nodes_}, std::move(a));
}

Graph Graph::permuted(std::span<const std::size_t> perm) const {
  if (perm.size() != num_nodes_) {
    throw ValidationError(graph_tag(id_) + "permutation length mismatch");
  }
  std::vector<double> feats(features_.size());
  for (std::size_t v = 0; v < num_nodes_; ++v)
    std::copy_n(features_.begin() + v * feature_dim_, feature_dim_,
                feats.begin() + perm[v] * feature_dim_);
  std::vector<Edge> edges;
  for (const auto& [u, v] : directed_edges()) edges.emplace_back(perm[u], perm[v]);
  std::optional<std::vector<std::uint8_t>> truth;
  if (truth_mask_) {
    truth.emplace(num_nodes_);
    for (std::size_t v = 0; v < num_nodes_; ++v) (*truth)[perm[v]] = (*truth_mask_)[v];
  }
  return Graph(id_, num_nodes_, feature_dim_, std::move(feats), edges, label_,
               std::move(truth));
}

Graph Graph::with_label(int label) const {
  Graph g = *this;
  if (label < 0) throw ValidationError(graph_tag(id_) + "negative label");
  g.label_ = label;
  return g;
}

Dataset::Dataset(std::size_t feature_dim, std::size_t num_classes, std::vector<Graph> graphs,
                 std::string generator_json)
    : feature_dim_(feature_dim),
      num_classes_(num_classes),
      graphs_(std::move(graphs)),
      by_class_(num_classes),
      generator_json_(std::move(generator_json)) {
  for (std::size_t i = 0; i < graphs_.size(); ++i) {
    const Graph& g = graphs_[i];
    if (g.feature_dim() != feature_dim_) {
      throw ValidationError(graph_tag(g.id()) + "feature dimension " +
                            std::to_string(g.feature_dim()) + " differs from dataset d=" +
                            std::to_string(feature_dim_));
    }
    if (static_cast<std::size_t>(g.label()) >= num_classes_) {
      throw ValidationError(graph_tag(g.id()) + "label " + std::to_string(g.label()) +
                            " outside 0.." + std::to_string(num_classes_ - 1));
    }
    by_class_[static_cast<std::size_t>(g.label())].push_back(i);
  }
}

const std::vector<std::size_t>& Dataset::indices_of_class(int cls) const {
  if (cls < 0 || static_cast<std::size_t>(cls) >= by_class_.size()) {
    throw SamplingError("class " + std::to_string(cls) + " is not in the dataset");
  }
  return by_class_[static_cast<std::size_t>(cls)];
}

bool Dataset::has_truth_masks() const {
  return !graphs_.empty() && std::all_of(graphs_.begin(), graphs_.end(), [](const Graph& g) {
    return g.truth_mask().has_value();
  });
}

double Dataset::mean_nodes() const {
  if (graphs_.empty()) return 0.0;
  double total = 0.0;
  for (const auto& g : graphs_) total += static_cast<double>(g.num_nodes());
  return total / static_cast<double>(graphs_.size());
}

double Dataset::mean_edges() const {
  if (graphs_.empty()) return 0.0;
  double total = 0.0;
  for (const auto& g : graphs_) total += static_cast<double>(g.num_edges());
  return total / static_cast<double>(graphs_.size());
}

}  // namespace msegnn
