#include "msegnn/metatrain.hpp"

#include <chrono>
#include <cmath>

#include "msegnn/error.hpp"

namespace msegnn {

void MetaConfig::validate() const {
  if (!(local_lr >= 0.0) || !std::isfinite(local_lr)) {
    throw ConfigError("meta.local_lr must be finite and >= 0");
  }
  if (!(global_lr >= 0.0) || !std::isfinite(global_lr)) {
    throw ConfigError("meta.global_lr must be finite and >= 0");
  }
  if (local_steps < 1) throw ConfigError("meta.local_steps (T) must be at least 1");
  if (episodes_per_meta_update < 1) {
    throw ConfigError("meta.episodes_per_meta_update must be at least 1");
  }
  if (n_way < 2) throw ConfigError("meta.n_way must be at least 2");
  if (k_shot < 1) throw ConfigError("meta.k_shot must be at least 1");
  if (query_per_class < 1) throw ConfigError("meta.query_per_class must be at least 1");
  if (eval_every < 1) throw ConfigError("meta.eval_every must be at least 1");
  if (exact_meta_gradient) {
    throw ConfigError("meta.exact_meta_gradient is reserved; only first-order updates exist");
  }
  local_weights.validate();
  global_weights.validate();
}

namespace {

void check_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericError(what + " is not finite");
}

}  // namespace

AdaptResult local_adapt(const MseGnn& model, const ParameterSet& params, const Episode& episode,
                        const MetaConfig& config) {
  if (episode.support.empty()) throw TaskError("local_adapt: empty support set");
  AdaptResult result{params.with_fast_copied(), {}};
  // Private copy so local backward passes never touch shared slow gradients.
  ParameterSet adapted = params.deep_copy();

  // Slow parameters are frozen here, so everything upstream of the
  // predictor is computed once and treated as constant.
  Episode support_only = episode;
  support_only.query.clear();
  EpisodeForward frozen;
  {
    NoGradGuard no_grad;
    frozen = model.forward_episode(params, support_only, Phase::kTrain);
  }

  Adam adam({config.local_lr});
  for (std::size_t step = 0; step < config.local_steps; ++step) {
    adapted.zero_grad();
    EpisodeForward fwd = frozen;
    const Tensor r_stack = [&] {
      std::vector<Tensor> rows;
      for (const auto& o : frozen.support) rows.push_back(o.rationale);
      return stack_rows(rows);
    }();
    LossBreakdown loss;
    try {
      fwd.support_logits = model.logits(adapted, r_stack, frozen.task_info);
      if (frozen.augmented.size() > 0 && config.local_weights.alpha_a != 0.0) {
        fwd.augmented_logits = model.logits(adapted, frozen.augmented.embeddings, frozen.task_info);
      }
      loss = episode_loss(fwd, episode, LossTarget::kSupport, config.local_weights);
    } catch (const NumericError& e) {
      throw AdaptationError(step, e.what());
    } catch (const DomainError& e) {
      throw AdaptationError(step, e.what());
    }
    if (!std::isfinite(loss.total.item())) throw AdaptationError(step, "support loss is not finite");
    result.step_losses.push_back(loss.total.item());
    if (loss.total.requires_grad()) backward(loss.total);
    if (config.local_optimizer == LocalOptimizer::kAdam) {
      adam.step(adapted, ParamTag::kFast);
    } else {
      sgd_step(adapted, config.local_lr, ParamTag::kFast);
    }
  }
  for (std::size_t i = 0; i < adapted.entries().size(); ++i) {
    const auto& e = adapted.entries()[i];
    if (e.tag != ParamTag::kFast) continue;
    const auto src = e.tensor.values();
    auto dst = result.params.entries()[i].tensor.mutable_values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return result;
}

StepMetrics meta_step(const MseGnn& model, ParameterSet& params,
                      std::span<const Episode> episodes, const MetaConfig& config,
                      Adam& optimizer) {
  if (episodes.empty()) throw TaskError("meta_step: no episodes");
  StepMetrics metrics;
  params.zero_grad();
  const double weight = 1.0 / static_cast<double>(episodes.size());
  std::vector<std::vector<double>> fast_grads;
  for (const auto& e : params.entries()) {
    fast_grads.emplace_back(e.tag == ParamTag::kFast ? e.tensor.numel() : 0, 0.0);
  }

  for (std::size_t b = 0; b < episodes.size(); ++b) {
    const Episode& episode = episodes[b];
    if (b == 0) metrics.slow_hash_before_adapt = params.hash(ParamTag::kSlow);
    AdaptResult adapted = local_adapt(model, params, episode, config);
    if (b == 0) metrics.slow_hash_after_adapt = params.hash(ParamTag::kSlow);
    metrics.support_loss += weight * adapted.step_losses.back();

    // Query loss at (theta_f, theta_g, theta_p'). Slow tensors are shared
    // with `params`, so their gradients land there directly.
    EpisodeForward fwd = model.forward_episode(adapted.params, episode, Phase::kTrain);
    LossBreakdown loss = episode_loss(fwd, episode, LossTarget::kQuery, config.global_weights);
    check_finite(loss.total.item(), "query loss");
    metrics.query_loss += weight * loss.total.item();
    if (loss.total.requires_grad()) backward(scale(loss.total, weight));
    for (std::size_t i = 0; i < params.entries().size(); ++i) {
      const auto& e = adapted.params.entries()[i];
      if (e.tag != ParamTag::kFast) continue;
      const auto g = e.tensor.grad();
      for (std::size_t k = 0; k < g.size(); ++k) fast_grads[i][k] += g[k];
    }
  }

  for (std::size_t i = 0; i < params.entries().size(); ++i) {
    auto& e = params.entries()[i];
    if (e.tag != ParamTag::kFast) continue;
    auto g = e.tensor.mutable_grad();
    std::copy(fast_grads[i].begin(), fast_grads[i].end(), g.begin());
  }
  for (const auto& e : params.entries()) {
    for (double g : e.tensor.grad()) check_finite(g, "gradient of '" + e.name + "'");
  }
  optimizer.step(params);
  params.zero_grad();
  return metrics;
}

StepMetrics meta_step(const MseGnn& model, ParameterSet& params, const Episode& episode,
                      const MetaConfig& config, Adam& optimizer) {
  return meta_step(model, params, std::span<const Episode>(&episode, 1), config, optimizer);
}

EpisodeEvaluation evaluate_episode(const MseGnn& model, const ParameterSet& params,
                                   const Episode& episode, const MetaConfig& config) {
  AdaptResult adapted = local_adapt(model, params, episode, config);
  NoGradGuard no_grad;
  const EpisodeForward fwd = model.forward_episode(adapted.params, episode, Phase::kEval);

  EpisodeEvaluation ev;
  const std::size_t n = model.config().n_way;
  std::vector<int> labels;
  std::vector<double> positive_scores;
  const Tensor probs = softmax_rows(fwd.query_logits);
  for (std::size_t q = 0; q < episode.query.size(); ++q) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < n; ++c)
      if (fwd.query_logits.at(q, c) > fwd.query_logits.at(q, best)) best = c;
    ev.predictions.push_back(static_cast<int>(best));
    labels.push_back(episode.query[q].label);
    if (n == 2) positive_scores.push_back(probs.at(q, 1));
  }
  ev.accuracy = accuracy(ev.predictions, labels);
  if (n == 2) {
    try {
      ev.auc = roc_auc(positive_scores, labels);
    } catch (const UndefinedMetricError&) {
    }
  }

  std::vector<Tensor> masks;
  std::vector<std::vector<std::uint8_t>> truths;
  for (std::size_t q = 0; q < episode.query.size(); ++q) {
    ev.query_masks.push_back(fwd.query[q].mask);
    if (const auto& t = episode.query[q].graph->truth_mask()) {
      masks.push_back(fwd.query[q].mask);
      truths.push_back(*t);
    }
  }
  if (!masks.empty()) {
    try {
      const auto ex = mean_explanation_auc(masks, truths);
      ev.explanation_auc = ex.value;
      ev.skipped_graphs = ex.graphs_skipped;
    } catch (const UndefinedMetricError&) {
      ev.skipped_graphs = masks.size();
    }
  }
  return ev;
}

TestSummary test_protocol(const MseGnn& model, const ParameterSet& params,
                          const Dataset& dataset, std::span<const int> classes,
                          const MetaConfig& config, std::size_t num_episodes,
                          std::uint64_t seed, const std::string& fingerprint) {
  TestSummary summary;
  if (num_episodes == 0) return summary;
  Rng rng(seed);
  std::vector<double> acc;
  std::vector<double> auc;
  std::vector<double> expl;
  for (std::size_t i = 0; i < num_episodes; ++i) {
    const Episode ep =
        sample_episode(dataset, classes, config.n_way, config.k_shot, config.query_per_class, rng);
    const EpisodeEvaluation ev = evaluate_episode(model, params, ep, config);
    acc.push_back(ev.accuracy);
    if (ev.auc) auc.push_back(*ev.auc);
    if (ev.explanation_auc) expl.push_back(*ev.explanation_auc);
    summary.skipped_graphs += ev.skipped_graphs;
  }
  summary.episodes = num_episodes;
  summary.accuracy = aggregate("accuracy", acc, fingerprint);
  if (!auc.empty()) summary.auc = aggregate("auc", auc, fingerprint);
  if (!expl.empty()) summary.explanation_auc = aggregate("explanation_auc", expl, fingerprint);
  return summary;
}

MetaTrainResult meta_train(MseGnn& model, const Dataset& dataset, const DatasetSplit& split,
                           const MetaConfig& config, const MetaTrainHooks& hooks) {
  config.validate();
  if (config.n_way != model.config().n_way) {
    throw ConfigError("meta.n_way (" + std::to_string(config.n_way) +
                      ") differs from the model's n_way (" +
                      std::to_string(model.config().n_way) + ")");
  }
  if (dataset.feature_dim() != model.config().input_dim) {
    throw ConfigError("dataset feature dimension " + std::to_string(dataset.feature_dim()) +
                      " differs from model.input_dim " + std::to_string(model.config().input_dim));
  }
  if (split.train_classes.size() < config.n_way) {
    throw ConfigError("the training split has " + std::to_string(split.train_classes.size()) +
                      " classes, fewer than n_way=" + std::to_string(config.n_way));
  }
  const bool validate = split.val_classes.size() >= config.n_way && config.val_episodes > 0;
  // Surface sampling problems before the loop starts.
  {
    Rng probe(config.seed);
    (void)sample_episode(dataset, split.train_classes, config.n_way, config.k_shot,
                         config.query_per_class, probe);
  }

  ParameterSet& params = model.params();
  Adam optimizer({config.global_lr});
  Rng rng(config.seed);
  const std::uint64_t val_seed = config.seed ^ 0x5DEECE66DULL;
  MetaTrainResult result;
  result.best = params.deep_copy();
  std::size_t stale = 0;
  const auto start = std::chrono::steady_clock::now();

  auto validate_now = [&]() {
    return test_protocol(model, params, dataset, split.val_classes, config, config.val_episodes,
                         val_seed)
        .accuracy->mean;
  };

  result.stop_reason = "max_meta_iterations";
  std::size_t episode_idx = 0;
  while (episode_idx < config.max_meta_iterations) {
    std::vector<Episode> batch;
    for (std::size_t b = 0; b < config.episodes_per_meta_update; ++b) {
      batch.push_back(sample_episode(dataset, split.train_classes, config.n_way, config.k_shot,
                                     config.query_per_class, rng));
      if (hooks.on_train_episode) hooks.on_train_episode(batch.back());
    }
    StepMetrics m;
    try {
      m = meta_step(model, params, batch, config, optimizer);
    } catch (const NumericError& e) {
      throw NumericError("episode " + std::to_string(episode_idx) + ": " + e.what());
    }
    result.local_adapt_calls += batch.size();
    if (m.slow_hash_before_adapt != m.slow_hash_after_adapt) ++result.slow_hash_violations;
    if (hooks.on_step) hooks.on_step(m);
    episode_idx += batch.size();

    LogRecord rec;
    rec.episode_idx = episode_idx;
    rec.support_loss = m.support_loss;
    rec.query_loss = m.query_loss;
    const bool last_iteration = episode_idx >= config.max_meta_iterations;
    if (validate && (episode_idx % config.eval_every == 0 || last_iteration)) {
      rec.val_accuracy = validate_now();
      result.last_val_accuracy = rec.val_accuracy;
      if (!result.best_val_accuracy || *rec.val_accuracy > *result.best_val_accuracy) {
        result.best_val_accuracy = rec.val_accuracy;
        result.best = params.deep_copy();
        result.best_episode = episode_idx;
        stale = 0;
      } else {
        ++stale;
      }
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            start)
                      .count();
    result.log.push_back(rec);
    if (hooks.on_record) hooks.on_record(rec);
    if (validate && config.patience > 0 && stale >= config.patience) {
      result.stop_reason = "patience";
      break;
    }
  }
  result.episodes_run = episode_idx;
  if (validate && result.log.size() > 0 && !result.log.back().val_accuracy) {
    result.last_val_accuracy = validate_now();
    result.log.back().val_accuracy = result.last_val_accuracy;
  }
  if (!validate) {
    result.best = params.deep_copy();
    result.best_episode = episode_idx;
  }
  result.last = params.deep_copy();
  return result;
}

}  // namespace msegnn
