#include "msegnn/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "msegnn/error.hpp"

namespace msegnn {

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw InputError("accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) throw InputError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InputError("roc_auc: length mismatch");
  std::size_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw InputError("roc_auc: labels must be 0 or 1");
    pos += y == 1;
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) {
    throw UndefinedMetricError("roc_auc: both classes must be present");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw InputError("roc_auc: NaN score");
  }
  // Rank-sum form; tied scores share their average rank. Ranks are kept
  // doubled so they stay integral.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::uint64_t doubled_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t doubled_avg = i + 1 + j;  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) doubled_rank_sum += doubled_avg;
    i = j;
  }
  // U = R_pos - pos(pos+1)/2, all doubled.
  const std::uint64_t doubled_u = doubled_rank_sum - pos * (pos + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(pos) *
                                           static_cast<double>(neg));
}

double explanation_auc(const Tensor& mask, std::span<const std::uint8_t> truth_mask) {
  if (mask.numel() != truth_mask.size()) {
    throw InputError("explanation_auc: mask has " + std::to_string(mask.numel()) +
                     " entries, truth mask " + std::to_string(truth_mask.size()));
  }
  std::vector<int> labels(truth_mask.begin(), truth_mask.end());
  return roc_auc(mask.values(), labels);
}

ExplanationAuc mean_explanation_auc(std::span<const Tensor> masks,
                                    std::span<const std::vector<std::uint8_t>> truth_masks) {
  if (masks.size() != truth_masks.size()) throw InputError("explanation_auc: length mismatch");
  ExplanationAuc out;
  double total = 0.0;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const auto& t = truth_masks[i];
    const bool has_one = std::find(t.begin(), t.end(), 1) != t.end();
    const bool has_zero = std::find(t.begin(), t.end(), 0) != t.end();
    if (!has_one || !has_zero) {
      ++out.graphs_skipped;
      continue;
    }
    total += explanation_auc(masks[i], t);
    ++out.graphs_used;
  }
  if (out.graphs_used == 0) {
    throw UndefinedMetricError("explanation_auc: no graph has a usable truth mask");
  }
  out.value = total / static_cast<double>(out.graphs_used);
  return out;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["metric"] = metric;
  j["mean"] = mean;
  j["std"] = std;
  j["n_episodes"] = n_episodes;
  j["per_episode"] = per_episode;
  j["config_fingerprint"] = config_fingerprint;
  return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MetricReport r;
    r.metric = j.at("metric").get<std::string>();
    r.mean = j.at("mean").get<double>();
    r.std = j.at("std").get<double>();
    r.n_episodes = j.at("n_episodes").get<std::size_t>();
    r.per_episode = j.at("per_episode").get<std::vector<double>>();
    r.config_fingerprint = j.value("config_fingerprint", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("metric report: ") + e.what());
  }
}

MetricReport aggregate(std::string metric, std::span<const double> per_episode,
                       std::string config_fingerprint) {
  if (per_episode.empty()) throw InputError("aggregate: no values");
  MetricReport r;
  r.metric = std::move(metric);
  r.per_episode.assign(per_episode.begin(), per_episode.end());
  r.n_episodes = per_episode.size();
  r.config_fingerprint = std::move(config_fingerprint);
  const double n = static_cast<double>(per_episode.size());
  double total = 0.0;
  for (double v : per_episode) total += v;
  r.mean = total / n;
  if (per_episode.size() > 1) {
    double ss = 0.0;
    for (double v : per_episode) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / (n - 1.0));
  }
  return r;
}

}  // namespace msegnn
