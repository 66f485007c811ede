#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "msegnn/graph.hpp"
#include "msegnn/rng.hpp"

namespace msegnn {

// Disjoint class-id sets for meta-training, validation and testing.
struct DatasetSplit {
  std::vector<int> train_classes;
  std::vector<int> val_classes;
  std::vector<int> test_classes;
};

enum class SplitRole { kTrain, kVal, kTest };

const std::vector<int>& classes_for(const DatasetSplit& split, SplitRole role);

// Shuffles 0..num_classes-1 with `seed` and cuts it into counts[0..2]
// classes (train, val, test). Each set is returned sorted.
DatasetSplit split_classes(std::size_t num_classes, std::span<const std::size_t> counts,
                           std::uint64_t seed);
// Ratio form; counts are rounded with the largest-remainder rule.
DatasetSplit split_classes_by_ratio(std::size_t num_classes,
                                    std::span<const double> ratios, std::uint64_t seed);

struct LabeledGraph {
  const Graph* graph;
  int label;  // local label in 0..n_way-1
};

// One N-way K-shot task. Graphs are borrowed from the dataset it was sampled
// from, which must outlive the episode.
struct Episode {
  std::vector<LabeledGraph> support;
  std::vector<LabeledGraph> query;
  std::vector<int> classes;  // classes[local_label] = global class id
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::size_t query_per_class = 0;

  // Local label of a global class id, or -1 when absent.
  int local_label(int global_class) const;
};

// Samples n_way distinct classes of `role`, then k_shot + query_per_class
// distinct graphs per class. Support and query are class-major.
Episode sample_episode(const Dataset& dataset, const DatasetSplit& split, SplitRole role,
                       std::size_t n_way, std::size_t k_shot, std::size_t query_per_class,
                       Rng& rng);
Episode sample_episode(const Dataset& dataset, std::span<const int> classes,
                       std::size_t n_way, std::size_t k_shot, std::size_t query_per_class,
                       Rng& rng);

}  // namespace msegnn
