#include "msegnn/objective.hpp"

#include <cmath>

#include "msegnn/error.hpp"

namespace msegnn {

void LossWeights::validate() const {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ConfigError(std::string("loss weight ") + name + " must be finite and >= 0");
    }
  };
  check(alpha_r, "alpha_r");
  check(alpha_a, "alpha_a");
  check(alpha_reg, "alpha_reg");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie strictly inside (0, 1)");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be positive and finite");
}

Tensor rationale_loss(const Tensor& logits, std::span<const int> labels) {
  const std::size_t rows = logits.rank() == 2 ? logits.rows() : 1;
  const std::size_t n = logits.cols();
  if (labels.size() != rows) {
    throw DimensionError("rationale_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " logit rows");
  }
  if (rows == 0) throw EmptyReductionError("rationale_loss: no rows");
  std::vector<double> pick(rows * n, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n) {
      throw LabelError("label " + std::to_string(labels[i]) + " outside 0.." +
                       std::to_string(n - 1));
    }
    pick[i * n + static_cast<std::size_t>(labels[i])] = -1.0 / static_cast<double>(rows);
  }
  return sum(mul(log_softmax_rows(logits), Tensor::from(logits.shape(), std::move(pick))));
}

Tensor rationale_loss(const Tensor& logits, int label) {
  const int labels[] = {label};
  return rationale_loss(logits, labels);
}

Tensor contrastive_loss(const Tensor& predictions, std::span<const int> labels, double tau) {
  if (!(tau > 0.0)) throw DomainError("contrastive_loss: tau must be positive");
  if (predictions.rank() != 2) throw RankError("contrastive_loss: expects [M, N] predictions");
  const std::size_t m = predictions.rows();
  if (labels.size() != m) throw DimensionError("contrastive_loss: one label per item is required");
  if (m < 2) throw InputError("contrastive_loss: needs at least two items");

  std::vector<std::size_t> positives(m, 0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j && labels[i] == labels[j]) ++positives[i];
  std::size_t anchors = 0;
  for (auto p : positives) anchors += p > 0;
  if (anchors == 0) throw DegenerateBatchError("contrastive_loss: no anchor has a positive");

  // loss = mean_i [ log sum_{k!=i} exp(s_ik) - 1/|P(i)| sum_{j in P(i)} s_ij ]
  std::vector<double> off_diag(m * m, 1.0);
  std::vector<double> pos_weight(m * m, 0.0);
  std::vector<double> anchor_weight(m, 0.0);
  const double inv_anchors = 1.0 / static_cast<double>(anchors);
  for (std::size_t i = 0; i < m; ++i) {
    off_diag[i * m + i] = 0.0;
    if (positives[i] == 0) continue;
    anchor_weight[i] = inv_anchors;
    for (std::size_t j = 0; j < m; ++j) {
      if (i != j && labels[i] == labels[j]) {
        pos_weight[i * m + j] = inv_anchors / static_cast<double>(positives[i]);
      }
    }
  }
  const Tensor sim = scale(matmul(predictions, transpose(predictions)), 1.0 / tau);
  const Tensor denom =
      reduce(ReduceKind::kSum, mul(exp(sim), Tensor::from({m, m}, std::move(off_diag))), 1);
  const Tensor log_term = sum(mul(log(denom), Tensor::from({m}, std::move(anchor_weight))));
  const Tensor pos_term = sum(mul(sim, Tensor::from({m, m}, std::move(pos_weight))));
  return sub(log_term, pos_term);
}

Tensor contrastive_loss(std::span<const Tensor> predictions, std::span<const int> labels,
                        double tau) {
  if (predictions.size() < 2) throw InputError("contrastive_loss: needs at least two items");
  return contrastive_loss(stack_rows(predictions), labels, tau);
}

Tensor size_regularizer(const Tensor& mask, double gamma) {
  if (mask.numel() == 0) throw EmptyReductionError("size_regularizer: empty mask");
  return abs(add_scalar(mean(mask), -gamma));
}

Tensor total_loss(const Tensor& rationale, const Tensor& contrastive, const Tensor& regularizer,
                  const LossWeights& weights) {
  auto check = [](const Tensor& t, const char* name) {
    if (!std::isfinite(t.item())) {
      throw NumericError(std::string("loss component ") + name + " is not finite");
    }
  };
  check(rationale, "rationale");
  check(contrastive, "contrastive");
  check(regularizer, "regularizer");
  return add(add(scale(rationale, weights.alpha_r), scale(contrastive, weights.alpha_a)),
             scale(regularizer, weights.alpha_reg));
}

LossBreakdown episode_loss(const EpisodeForward& forward, const Episode& episode,
                           LossTarget target, const LossWeights& weights) {
  const bool support = target == LossTarget::kSupport;
  const auto& items = support ? episode.support : episode.query;
  const auto& outputs = support ? forward.support : forward.query;
  const Tensor& logits = support ? forward.support_logits : forward.query_logits;
  if (items.empty()) throw TaskError("episode_loss: target set is empty");

  LossBreakdown out;
  out.rationale = Tensor::scalar(0.0);
  out.contrastive = Tensor::scalar(0.0);
  out.regularizer = Tensor::scalar(0.0);
  if (weights.alpha_r != 0.0) {
    std::vector<int> labels;
    for (const auto& it : items) labels.push_back(it.label);
    out.rationale = rationale_loss(logits, labels);
  }
  if (weights.alpha_a != 0.0 && forward.augmented.size() >= 2) {
    out.contrastive = contrastive_loss(softmax_rows(forward.augmented_logits),
                                       forward.augmented.labels, weights.tau);
  }
  if (weights.alpha_reg != 0.0) {
    std::vector<Tensor> terms;
    for (const auto& o : outputs) terms.push_back(reshape(size_regularizer(o.mask, weights.gamma), {1}));
    out.regularizer = mean(concat(terms, 0));
  }
  out.total = total_loss(out.rationale, out.contrastive, out.regularizer, weights);
  return out;
}

}  // namespace msegnn
