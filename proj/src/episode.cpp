#include "msegnn/episode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msegnn/error.hpp"

namespace msegnn {

const std::vector<int>& classes_for(const DatasetSplit& split, SplitRole role) {
  switch (role) {
    case SplitRole::kTrain: return split.train_classes;
    case SplitRole::kVal: return split.val_classes;
    case SplitRole::kTest: return split.test_classes;
  }
  return split.train_classes;
}

DatasetSplit split_classes(std::size_t num_classes, std::span<const std::size_t> counts,
                           std::uint64_t seed) {
  if (counts.size() != 3) {
    throw ConfigError("split needs exactly three counts (train, val, test)");
  }
  const std::size_t total = counts[0] + counts[1] + counts[2];
  if (total != num_classes) {
    throw ConfigError("split counts sum to " + std::to_string(total) + " but there are " +
                      std::to_string(num_classes) + " classes");
  }
  std::vector<int> ids(num_classes);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(seed);
  rng.shuffle(ids);
  DatasetSplit split;
  auto take = [&](std::size_t from, std::size_t count) {
    std::vector<int> out(ids.begin() + static_cast<std::ptrdiff_t>(from),
                         ids.begin() + static_cast<std::ptrdiff_t>(from + count));
    std::sort(out.begin(), out.end());
    return out;
  };
  split.train_classes = take(0, counts[0]);
  split.val_classes = take(counts[0], counts[1]);
  split.test_classes = take(counts[0] + counts[1], counts[2]);
  return split;
}

DatasetSplit split_classes_by_ratio(std::size_t num_classes, std::span<const double> ratios,
                                    std::uint64_t seed) {
  if (ratios.size() != 3) throw ConfigError("split needs exactly three ratios");
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (!(sum > 0.0) || std::any_of(ratios.begin(), ratios.end(), [](double r) { return r < 0; })) {
    throw ConfigError("split ratios must be non-negative with a positive sum");
  }
  std::size_t counts[3];
  double remainder[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = ratios[i] / sum * static_cast<double>(num_classes);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < num_classes) {
    const auto i = static_cast<std::size_t>(
        std::max_element(std::begin(remainder), std::end(remainder)) - std::begin(remainder));
    ++counts[i];
    remainder[i] = -1.0;
    ++assigned;
  }
  return split_classes(num_classes, counts, seed);
}

int Episode::local_label(int global_class) const {
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == global_class) return static_cast<int>(i);
  return -1;
}

Episode sample_episode(const Dataset& dataset, const DatasetSplit& split, SplitRole role,
                       std::size_t n_way, std::size_t k_shot, std::size_t query_per_class,
                       Rng& rng) {
  return sample_episode(dataset, classes_for(split, role), n_way, k_shot, query_per_class,
                        rng);
}

Episode sample_episode(const Dataset& dataset, std::span<const int> classes,
                       std::size_t n_way, std::size_t k_shot, std::size_t query_per_class,
                       Rng& rng) {
  if (n_way < 1 || k_shot < 1) throw SamplingError("n_way and k_shot must be positive");
  if (classes.size() < n_way) {
    throw SamplingError("need " + std::to_string(n_way) + " classes but the split has " +
                        std::to_string(classes.size()) + " (short by " +
                        std::to_string(n_way - classes.size()) + ")");
  }
  const std::size_t per_class = k_shot + query_per_class;
  for (int c : classes) {
    const std::size_t have = dataset.indices_of_class(c).size();
    if (have < per_class) {
      throw SamplingError("class " + std::to_string(c) + " has " + std::to_string(have) +
                          " graphs but an episode needs " + std::to_string(per_class) +
                          " (short by " + std::to_string(per_class - have) + ")");
    }
  }

  std::vector<int> pool(classes.begin(), classes.end());
  rng.shuffle(pool);
  Episode ep;
  ep.n_way = n_way;
  ep.k_shot = k_shot;
  ep.query_per_class = query_per_class;
  ep.classes.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_way));

  std::vector<std::vector<std::size_t>> chosen(n_way);
  for (std::size_t local = 0; local < n_way; ++local) {
    std::vector<std::size_t> idx = dataset.indices_of_class(ep.classes[local]);
    // Partial Fisher-Yates: the first per_class entries are a uniform sample.
    for (std::size_t i = 0; i < per_class; ++i) {
      std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    }
    chosen[local].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_class));
  }
  for (std::size_t local = 0; local < n_way; ++local) {
    for (std::size_t i = 0; i < k_shot; ++i)
      ep.support.push_back({&dataset[chosen[local][i]], static_cast<int>(local)});
  }
  for (std::size_t local = 0; local < n_way; ++local) {
    for (std::size_t i = k_shot; i < per_class; ++i)
      ep.query.push_back({&dataset[chosen[local][i]], static_cast<int>(local)});
  }
  return ep;
}

}  // namespace msegnn
