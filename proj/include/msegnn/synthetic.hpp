#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "msegnn/graph.hpp"

namespace msegnn {

// A small connected structure whose identity determines a graph's class.
struct Motif {
  std::string name;
  std::size_t num_nodes;
  std::vector<Edge> edges;  // undirected, u < v
};

// The fixed motif library; class c uses motif_library()[c].
const std::vector<Motif>& motif_library();

struct SyntheticConfig {
  std::size_t feature_dim = 8;
  // Features are 1 + U[0, feature_noise) per entry.
  double feature_noise = 0.1;
  // Barabási–Albert base graph: node count uniform in [base_min, base_max],
  // each new node attaches to `ba_attach` existing nodes.
  std::size_t base_min = 60;
  std::size_t base_max = 76;
  std::size_t ba_attach = 3;
  // Random edges wiring the motif to the base.
  std::size_t attach_edges = 1;

  std::string to_json() const;
  void validate() const;
};

// num_classes * samples_per_class graphs, class-major order, ids 0..N-1.
// Node order inside each graph is shuffled; truth_mask marks motif nodes.
Dataset generate_synthetic(std::size_t num_classes, std::size_t samples_per_class,
                           std::uint64_t seed, const SyntheticConfig& config = {});

}  // namespace msegnn
