#include "msegnn/synthetic.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <set>

#include "msegnn/error.hpp"
#include "msegnn/rng.hpp"

namespace msegnn {

namespace {

Motif cycle(std::size_t k) {
  Motif m{"cycle-" + std::to_string(k), k, {}};
  for (std::size_t i = 0; i + 1 < k; ++i) m.edges.emplace_back(i, i + 1);
  m.edges.emplace_back(0, k - 1);
  return m;
}

Motif star(std::size_t leaves) {
  Motif m{"star-" + std::to_string(leaves), leaves + 1, {}};
  for (std::size_t i = 1; i <= leaves; ++i) m.edges.emplace_back(0, i);
  return m;
}

Motif grid(std::size_t rows, std::size_t cols) {
  Motif m{"grid-" + std::to_string(rows) + "x" + std::to_string(cols), rows * cols, {}};
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t v = r * cols + c;
      if (c + 1 < cols) m.edges.emplace_back(v, v + 1);
      if (r + 1 < rows) m.edges.emplace_back(v, v + cols);
    }
  }
  return m;
}

Motif clique(std::size_t k) {
  Motif m{"clique-" + std::to_string(k), k, {}};
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) m.edges.emplace_back(i, j);
  return m;
}

Motif wheel(std::size_t rim) {
  Motif m = cycle(rim);
  m.name = "wheel-" + std::to_string(rim);
  for (auto& [u, v] : m.edges) {
    ++u;
    ++v;
  }
  m.num_nodes = rim + 1;
  for (std::size_t i = 1; i <= rim; ++i) m.edges.emplace_back(0, i);
  return m;
}

Motif path(std::size_t k) {
  Motif m{"path-" + std::to_string(k), k, {}};
  for (std::size_t i = 0; i + 1 < k; ++i) m.edges.emplace_back(i, i + 1);
  return m;
}

Motif binary_tree(std::size_t depth) {
  const std::size_t n = (std::size_t{1} << (depth + 1)) - 1;
  Motif m{"tree-" + std::to_string(depth), n, {}};
  for (std::size_t v = 1; v < n; ++v) m.edges.emplace_back((v - 1) / 2, v);
  return m;
}

std::vector<Motif> build_library() {
  std::vector<Motif> lib;
  lib.push_back({"house", 5, {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {0, 4}, {1, 4}}});
  lib.push_back(cycle(5));
  lib.push_back(grid(3, 3));
  lib.push_back(star(6));
  lib.push_back(wheel(5));
  lib.push_back(clique(4));
  lib.push_back(grid(2, 4));
  lib.push_back(path(6));
  lib.push_back(binary_tree(2));
  lib.push_back(cycle(8));
  lib.push_back(clique(5));
  lib.push_back(star(4));
  lib.push_back(cycle(4));
  lib.push_back(grid(2, 3));
  lib.push_back(wheel(7));
  lib.push_back(path(4));
  for (auto& m : lib) {
    for (auto& [u, v] : m.edges)
      if (u > v) std::swap(u, v);
    std::sort(m.edges.begin(), m.edges.end());
  }
  return lib;
}

// Barabási–Albert graph grown from a clique on attach+1 nodes.
std::vector<Edge> barabasi_albert(std::size_t n, std::size_t attach, Rng& rng) {
  std::vector<Edge> edges;
  std::vector<std::size_t> endpoints;  // node repeated once per incident edge
  const std::size_t seed_nodes = std::min(n, attach + 1);
  for (std::size_t i = 0; i < seed_nodes; ++i) {
    for (std::size_t j = i + 1; j < seed_nodes; ++j) {
      edges.emplace_back(i, j);
      endpoints.push_back(i);
      endpoints.push_back(j);
    }
  }
  for (std::size_t v = seed_nodes; v < n; ++v) {
    std::set<std::size_t> targets;
    while (targets.size() < std::min(attach, v)) {
      targets.insert(endpoints[rng.below(endpoints.size())]);
    }
    for (std::size_t t : targets) {
      edges.emplace_back(t, v);
      endpoints.push_back(t);
      endpoints.push_back(v);
    }
  }
  return edges;
}

}  // namespace

const std::vector<Motif>& motif_library() {
  static const std::vector<Motif> lib = build_library();
  return lib;
}

std::string SyntheticConfig::to_json() const {
  nlohmann::json j;
  j["feature_dim"] = feature_dim;
  j["feature_noise"] = feature_noise;
  j["base_min"] = base_min;
  j["base_max"] = base_max;
  j["ba_attach"] = ba_attach;
  j["attach_edges"] = attach_edges;
  return j.dump();
}

void SyntheticConfig::validate() const {
  if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
  if (!(feature_noise >= 0.0)) throw ConfigError("feature_noise must be non-negative");
  if (ba_attach == 0) throw ConfigError("ba_attach must be positive");
  if (base_min < ba_attach + 1 || base_max < base_min) {
    throw ConfigError("base size range [" + std::to_string(base_min) + ", " +
                      std::to_string(base_max) + "] is invalid for ba_attach=" +
                      std::to_string(ba_attach));
  }
  if (attach_edges == 0) throw ConfigError("attach_edges must be positive");
}

Dataset generate_synthetic(std::size_t num_classes, std::size_t samples_per_class,
                           std::uint64_t seed, const SyntheticConfig& config) {
  config.validate();
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (samples_per_class < 1) throw ConfigError("samples_per_class must be at least 1");
  const auto& lib = motif_library();
  if (num_classes > lib.size()) {
    throw ConfigError("num_classes " + std::to_string(num_classes) +
                      " exceeds the motif library size " + std::to_string(lib.size()));
  }

  Rng rng(seed);
  const std::size_t d = config.feature_dim;
  std::vector<Graph> graphs;
  graphs.reserve(num_classes * samples_per_class);
  std::int64_t next_id = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const Motif& motif = lib[c];
    for (std::size_t s = 0; s < samples_per_class; ++s) {
      const auto base_n = static_cast<std::size_t>(rng.between(
          static_cast<std::int64_t>(config.base_min), static_cast<std::int64_t>(config.base_max)));
      const std::size_t n = base_n + motif.num_nodes;
      std::vector<Edge> edges = barabasi_albert(base_n, config.ba_attach, rng);
      for (const auto& [u, v] : motif.edges) edges.emplace_back(base_n + u, base_n + v);
      const std::size_t attach = std::min(config.attach_edges, base_n * motif.num_nodes);
      std::set<Edge> wires;
      while (wires.size() < attach) {
        wires.emplace(rng.below(base_n), base_n + rng.below(motif.num_nodes));
      }
      edges.insert(edges.end(), wires.begin(), wires.end());

      std::vector<std::size_t> perm(n);
      for (std::size_t v = 0; v < n; ++v) perm[v] = v;
      rng.shuffle(perm);
      for (auto& [u, v] : edges) {
        u = perm[u];
        v = perm[v];
      }
      std::vector<std::uint8_t> truth(n, 0);
      for (std::size_t v = base_n; v < n; ++v) truth[perm[v]] = 1;
      std::vector<double> features(n * d);
      for (double& x : features) x = 1.0 + config.feature_noise * rng.uniform();

      graphs.push_back(Graph::from_undirected(next_id++, n, d, std::move(features), edges,
                                              static_cast<int>(c), std::move(truth)));
    }
  }
  return Dataset(d, num_classes, std::move(graphs), config.to_json());
}

}  // namespace msegnn
