#pragma once

#include <span>
#include <string>
#include <vector>

#include "msegnn/model.hpp"
#include "msegnn/tensor.hpp"

namespace msegnn {

struct LossWeights {
  double alpha_r = 1.0;    // rationale classification
  double alpha_a = 0.5;    // contrastive augmentation
  double alpha_reg = 1.0;  // rationale size
  double gamma = 0.1;      // target rationale fraction, in (0, 1)
  double tau = 0.5;        // contrastive temperature

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

// Mean negative log-likelihood of `labels` under softmax(logits). logits is
// [N] with one label or [k, N] with k labels.
Tensor rationale_loss(const Tensor& logits, std::span<const int> labels);
Tensor rationale_loss(const Tensor& logits, int label);

// Supervised contrastive loss over prediction vectors [M, N]:
//   anchor i, positives P(i) = {j != i : y_j = y_i},
//   l_i = -1/|P(i)| sum_{j in P(i)} log(exp(s_ij) / sum_{k != i} exp(s_ik)),
//   s_ij = <p_i, p_j> / tau,
// averaged over anchors with at least one positive.
Tensor contrastive_loss(const Tensor& predictions, std::span<const int> labels, double tau);
Tensor contrastive_loss(std::span<const Tensor> predictions, std::span<const int> labels,
                        double tau);

// |mean(m) - gamma|.
Tensor size_regularizer(const Tensor& mask, double gamma);

// alpha_r * L_r + alpha_a * L_a + alpha_reg * L_reg. Throws NumericError
// naming the first non-finite component.
Tensor total_loss(const Tensor& rationale, const Tensor& contrastive, const Tensor& regularizer,
                  const LossWeights& weights);

struct LossBreakdown {
  Tensor total;
  Tensor rationale;
  Tensor contrastive;
  Tensor regularizer;
};

enum class LossTarget { kSupport, kQuery };

// Episode objective. L_r and L_reg average over the target set's graphs;
// L_a is computed on the support augmentation. Components whose weight is
// zero are not evaluated and reported as 0.
LossBreakdown episode_loss(const EpisodeForward& forward, const Episode& episode,
                           LossTarget target, const LossWeights& weights);

}  // namespace msegnn
