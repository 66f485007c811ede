#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msegnn/tensor.hpp"

namespace msegnn {

// Fraction of positions where predictions == labels.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

// Mann–Whitney AUC: P(score of a random positive > score of a random
// negative), ties counted as 1/2. labels are 0/1 and must include both.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// AUC of mask values against a 0/1 ground-truth node mask.
double explanation_auc(const Tensor& mask, std::span<const std::uint8_t> truth_mask);

struct ExplanationAuc {
  double value = 0.0;
  std::size_t graphs_used = 0;
  std::size_t graphs_skipped = 0;  // truth masks with a single class
};

// Mean per-graph explanation AUC. Graphs with degenerate truth masks are
// skipped; if every graph is skipped, UndefinedMetricError is thrown.
ExplanationAuc mean_explanation_auc(std::span<const Tensor> masks,
                                    std::span<const std::vector<std::uint8_t>> truth_masks);

struct MetricReport {
  std::string metric;
  std::vector<double> per_episode;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
  std::size_t n_episodes = 0;
  std::string config_fingerprint;

  std::string to_json() const;  // {metric, mean, std, n_episodes, per_episode, config_fingerprint}
  static MetricReport from_json(const std::string& text);
};

MetricReport aggregate(std::string metric, std::span<const double> per_episode,
                       std::string config_fingerprint = "");

}  // namespace msegnn
