#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msegnn/encoders.hpp"
#include "msegnn/episode.hpp"
#include "msegnn/parameters.hpp"
#include "msegnn/tensor.hpp"

namespace msegnn {

// Applied to every encoder output before it is used.
enum class EmbeddingTransform { kNone, kL2, kAsinh };

std::string transform_name(EmbeddingTransform t);
EmbeddingTransform parse_transform(const std::string& name);

// kConcat: logits = MLP([h || TI]).
// kMetric: logit_c = -s * ||P(h / |h|) - P(TI_c / |TI_c|)||^2 with P an MLP
// {d, d, d} (fast) and s a scalar (slow, starts at 0).
enum class PredictorKind { kConcat, kMetric };

std::string predictor_name(PredictorKind k);
PredictorKind parse_predictor(const std::string& name);

struct ModelConfig {
  EncoderKind encoder = EncoderKind::kGin;
  std::size_t input_dim = 8;
  std::size_t hidden_dim = 32;
  std::size_t layers = 2;
  std::size_t n_way = 2;
  EmbeddingTransform transform = EmbeddingTransform::kAsinh;
  PredictorKind predictor = PredictorKind::kMetric;
  // Concat predictor only: it sees [h - c || TI_0 - c || ...] with c the prototype mean.
  bool center_task = true;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Per-class prototypes built from support graphs only, ordered by local label.
struct TaskInfo {
  std::vector<Tensor> prototypes;  // n_way x [d]
  Tensor concat;                   // [n_way * d]
};

// Explanation and embeddings for one graph.
struct RationaleOutput {
  Tensor node_embeddings;  // H, [n, d]
  Tensor mask;             // m, [n], entries in (0, 1)
  Tensor rationale;        // h_r, [d]
  Tensor non_rationale;    // h_n, [d]
};

struct Decomposition {
  Tensor rationale;
  Tensor non_rationale;
};

// Embedding-level augmentation: row i*S' + j is h_r(i) + h_n(j), labelled
// by the rationale donor i.
struct AugmentedBatch {
  Tensor embeddings;  // [S*S', d]; empty when there is nothing to combine
  std::vector<int> labels;
  std::vector<std::pair<std::size_t, std::size_t>> donors;
  std::size_t size() const { return labels.size(); }
};

// Builds the prototypes from already-computed graph embeddings.
TaskInfo task_info_from_embeddings(std::span<const Tensor> graph_embeddings,
                                   std::span<const int> labels, std::size_t n_way);
TaskInfo compute_task_info(const GnnEncoder& encoder, const ParameterSet& params,
                           std::span<const LabeledGraph> support, std::size_t n_way,
                           EmbeddingTransform transform = EmbeddingTransform::kAsinh);

Tensor node_embeddings(const GnnEncoder& encoder, const ParameterSet& params, const Graph& graph,
                       EmbeddingTransform transform);

// m_v = sigmoid(MLP([h'_v || TI])) for every node v.
Tensor explain(const GnnEncoder& explainer_encoder, const MlpBlock& mask_mlp,
               const ParameterSet& params, const Graph& graph, const TaskInfo& task_info,
               EmbeddingTransform transform = EmbeddingTransform::kAsinh);

// h_r = readout(H scaled by m), h_n = readout(H scaled by 1 - m).
Decomposition decompose(const Tensor& node_embeddings, const Tensor& mask);

// logits = MLP([h || TI]); h is [d] -> [N] or [k, d] -> [k, N]. With
// `center_task` every input block is shifted by the prototype mean.
Tensor predict(const MlpBlock& predictor, const ParameterSet& params, const Tensor& h,
               const TaskInfo& task_info, bool center_task = false);
// Metric form; same shapes as predict(). `scale` has shape [1].
Tensor predict_metric(const MlpBlock& predictor, const ParameterSet& params, const Tensor& h,
                      const TaskInfo& task_info, const Tensor& scale);

// rationales and non_rationales are [S, d] / [S', d] stacks.
AugmentedBatch augment(const Tensor& rationales, std::span<const int> labels,
                       const Tensor& non_rationales);

enum class Phase { kTrain, kEval };

struct EpisodeForward {
  TaskInfo task_info;
  std::vector<RationaleOutput> support;
  std::vector<RationaleOutput> query;
  Tensor support_logits;  // [S, N]
  Tensor query_logits;    // [Q, N]
  AugmentedBatch augmented;  // support-only, training phase only
  Tensor augmented_logits;   // [S*S, N]
};

// Explainer-predictor model: encoder f (slow), explainer g = encoder + mask
// MLP (slow), predictor p (fast).
class MseGnn {
 public:
  MseGnn(const ModelConfig& config, std::uint64_t seed);
  // Architecture only; `params` is filled from another source (checkpoint).
  explicit MseGnn(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& params() { return params_; }

  const GnnEncoder& encoder() const { return encoder_; }
  const GnnEncoder& explainer_encoder() const { return explainer_encoder_; }
  const MlpBlock& mask_mlp() const { return mask_mlp_; }
  const MlpBlock& predictor() const { return predictor_; }

  TaskInfo task_info(const ParameterSet& params, std::span<const LabeledGraph> support) const;
  RationaleOutput rationale(const ParameterSet& params, const Graph& graph,
                            const TaskInfo& task_info) const;
  Tensor mask(const ParameterSet& params, const Graph& graph, const TaskInfo& task_info) const;
  static constexpr const char* kLogitScale = "predictor.scale";

  // Predictor logits in the configured form.
  Tensor logits(const ParameterSet& params, const Tensor& h, const TaskInfo& task_info) const;

  // Task information from the support set, rationale outputs and logits for
  // every support and query graph, and (training phase) the augmented batch.
  EpisodeForward forward_episode(const ParameterSet& params, const Episode& episode,
                                 Phase phase) const;

 private:
  void build(std::uint64_t seed);

  ModelConfig config_;
  ParameterSet params_;
  GnnEncoder encoder_;
  GnnEncoder explainer_encoder_;
  MlpBlock mask_mlp_;
  MlpBlock predictor_;
};

}  // namespace msegnn
