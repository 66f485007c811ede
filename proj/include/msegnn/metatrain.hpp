#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msegnn/episode.hpp"
#include "msegnn/evalkit.hpp"
#include "msegnn/model.hpp"
#include "msegnn/objective.hpp"
#include "msegnn/optimizer.hpp"

namespace msegnn {

enum class LocalOptimizer { kAdam, kSgd };

struct MetaConfig {
  double local_lr = 1e-3;   // eta_1
  double global_lr = 1e-3;  // eta_2
  std::size_t local_steps = 5;  // T
  std::size_t episodes_per_meta_update = 1;
  std::size_t max_meta_iterations = 2000;
  std::size_t patience = 20;      // validations without improvement
  std::size_t eval_every = 100;   // episodes between validations
  std::size_t val_episodes = 20;
  std::size_t n_way = 2;
  std::size_t k_shot = 5;
  std::size_t query_per_class = 15;
  std::uint64_t seed = 0;
  LossWeights local_weights;
  LossWeights global_weights;
  LocalOptimizer local_optimizer = LocalOptimizer::kAdam;
  // Reserved for differentiating through the local steps; only the
  // first-order update is implemented and `true` is rejected.
  bool exact_meta_gradient = false;

  void validate() const;
};

struct AdaptResult {
  ParameterSet params;              // slow tensors shared, fast tensors adapted
  std::vector<double> step_losses;  // support loss before each local step
};

// T local steps on the support loss. Only fast parameters change, and only
// in a copy: `params` is left untouched.
AdaptResult local_adapt(const MseGnn& model, const ParameterSet& params, const Episode& episode,
                        const MetaConfig& config);

struct StepMetrics {
  double support_loss = 0.0;  // last local step
  double query_loss = 0.0;
  std::uint64_t slow_hash_before_adapt = 0;
  std::uint64_t slow_hash_after_adapt = 0;
};

// One global update over `episodes` (gradients averaged): adapt the fast
// parameters on each support set, evaluate the query loss with the adapted
// copy, and apply its first-order gradient to all of `params`.
StepMetrics meta_step(const MseGnn& model, ParameterSet& params,
                      std::span<const Episode> episodes, const MetaConfig& config,
                      Adam& optimizer);
StepMetrics meta_step(const MseGnn& model, ParameterSet& params, const Episode& episode,
                      const MetaConfig& config, Adam& optimizer);

struct EpisodeEvaluation {
  double accuracy = 0.0;
  std::optional<double> auc;              // binary tasks only
  std::optional<double> explanation_auc;  // when truth masks are present
  std::size_t skipped_graphs = 0;
  std::vector<int> predictions;           // per query graph
  std::vector<Tensor> query_masks;
};

// Adapt on the support set, then score the query set without gradients.
EpisodeEvaluation evaluate_episode(const MseGnn& model, const ParameterSet& params,
                                   const Episode& episode, const MetaConfig& config);

struct TestSummary {
  std::size_t episodes = 0;
  std::optional<MetricReport> accuracy;
  std::optional<MetricReport> auc;
  std::optional<MetricReport> explanation_auc;
  std::size_t skipped_graphs = 0;
};

// num_episodes test tasks sampled from `classes` with `seed`. Every episode
// adapts its own copy; `params` is never modified.
TestSummary test_protocol(const MseGnn& model, const ParameterSet& params,
                          const Dataset& dataset, std::span<const int> classes,
                          const MetaConfig& config, std::size_t num_episodes,
                          std::uint64_t seed, const std::string& fingerprint = "");

struct LogRecord {
  std::size_t episode_idx = 0;
  double support_loss = 0.0;
  double query_loss = 0.0;
  std::optional<double> val_accuracy;
  double wall_ms = 0.0;
};

struct MetaTrainHooks {
  std::function<void(const Episode&)> on_train_episode;
  std::function<void(const LogRecord&)> on_record;
  std::function<void(const StepMetrics&)> on_step;
};

struct MetaTrainResult {
  ParameterSet best;  // highest validation accuracy (or last without validation)
  ParameterSet last;
  std::vector<LogRecord> log;
  std::optional<double> best_val_accuracy;
  std::optional<double> last_val_accuracy;
  std::size_t best_episode = 0;
  std::size_t episodes_run = 0;
  std::size_t local_adapt_calls = 0;
  std::size_t slow_hash_violations = 0;
  std::string stop_reason;
};

// Episodic meta-training from the model's current parameters, which are
// updated in place and end up equal to `last`.
MetaTrainResult meta_train(MseGnn& model, const Dataset& dataset, const DatasetSplit& split,
                           const MetaConfig& config, const MetaTrainHooks& hooks = {});

}  // namespace msegnn
