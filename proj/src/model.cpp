#include "msegnn/model.hpp"

#include <algorithm>

#include "msegnn/error.hpp"

namespace msegnn {

void ModelConfig::validate() const {
  if (input_dim == 0) throw ConfigError("model.input_dim must be positive");
  if (hidden_dim == 0) throw ConfigError("model.hidden_dim must be positive");
  if (layers < 1 || layers > 3) throw ConfigError("model.layers must be 1, 2 or 3");
  if (n_way < 2) throw ConfigError("model.n_way must be at least 2");
}

TaskInfo task_info_from_embeddings(std::span<const Tensor> graph_embeddings,
                                   std::span<const int> labels, std::size_t n_way) {
  if (graph_embeddings.size() != labels.size()) {
    throw TaskError("task info: embeddings and labels differ in length");
  }
  std::vector<std::vector<Tensor>> by_class(n_way);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_way) {
      throw TaskError("task info: support label " + std::to_string(labels[i]) +
                      " outside 0.." + std::to_string(n_way - 1));
    }
    by_class[static_cast<std::size_t>(labels[i])].push_back(graph_embeddings[i]);
  }
  TaskInfo info;
  for (std::size_t c = 0; c < n_way; ++c) {
    if (by_class[c].empty()) {
      throw TaskError("task info: class " + std::to_string(c) + " has no support graph");
    }
    info.prototypes.push_back(readout(stack_rows(by_class[c])));
  }
  info.concat = concat(info.prototypes, 0);
  return info;
}

std::string transform_name(EmbeddingTransform t) {
  switch (t) {
    case EmbeddingTransform::kNone: return "none";
    case EmbeddingTransform::kL2: return "l2";
    case EmbeddingTransform::kAsinh: return "asinh";
  }
  return "none";
}

EmbeddingTransform parse_transform(const std::string& name) {
  if (name == "none") return EmbeddingTransform::kNone;
  if (name == "l2") return EmbeddingTransform::kL2;
  if (name == "asinh") return EmbeddingTransform::kAsinh;
  throw ConfigError("unknown embedding transform '" + name + "' (expected none, l2 or asinh)");
}

std::string predictor_name(PredictorKind k) {
  return k == PredictorKind::kConcat ? "concat" : "metric";
}

PredictorKind parse_predictor(const std::string& name) {
  if (name == "concat") return PredictorKind::kConcat;
  if (name == "metric") return PredictorKind::kMetric;
  throw ConfigError("unknown predictor '" + name + "' (expected concat or metric)");
}

Tensor node_embeddings(const GnnEncoder& encoder, const ParameterSet& params, const Graph& graph,
                       EmbeddingTransform transform) {
  Tensor h = encode(encoder, params, graph);
  switch (transform) {
    case EmbeddingTransform::kNone: return h;
    case EmbeddingTransform::kL2: return normalize_rows(h);
    case EmbeddingTransform::kAsinh: return asinh(h);
  }
  return h;
}

TaskInfo compute_task_info(const GnnEncoder& encoder, const ParameterSet& params,
                           std::span<const LabeledGraph> support, std::size_t n_way,
                           EmbeddingTransform transform) {
  std::vector<Tensor> embeddings;
  std::vector<int> labels;
  for (const auto& item : support) {
    embeddings.push_back(
        readout(node_embeddings(encoder, params, *item.graph, transform)));
    labels.push_back(item.label);
  }
  return task_info_from_embeddings(embeddings, labels, n_way);
}

Tensor explain(const GnnEncoder& explainer_encoder, const MlpBlock& mask_mlp,
               const ParameterSet& params, const Graph& graph, const TaskInfo& task_info,
               EmbeddingTransform transform) {
  const Tensor h = node_embeddings(explainer_encoder, params, graph, transform);
  if (h.cols() + task_info.concat.numel() != mask_mlp.input_dim()) {
    throw DimensionError("explain: node embedding width " + std::to_string(h.cols()) +
                         " plus task information " + std::to_string(task_info.concat.numel()) +
                         " does not match mask MLP input " +
                         std::to_string(mask_mlp.input_dim()));
  }
  const Tensor input = concat({h, repeat_rows(task_info.concat, h.rows())}, 1);
  return reshape(sigmoid(mlp_forward(mask_mlp, params, input)), {h.rows()});
}

Decomposition decompose(const Tensor& node_embeddings, const Tensor& mask) {
  if (mask.rank() != 1 || mask.numel() != node_embeddings.rows()) {
    throw DimensionError("decompose: mask of shape " + shape_to_string(mask.shape()) +
                         " does not match embeddings " +
                         shape_to_string(node_embeddings.shape()));
  }
  const Tensor complement = add_scalar(neg(mask), 1.0);
  return {readout(node_embeddings, mask), readout(node_embeddings, complement)};
}

Tensor predict(const MlpBlock& predictor, const ParameterSet& params, const Tensor& h,
               const TaskInfo& task_info, bool center_task) {
  if (h.cols() + task_info.concat.numel() != predictor.input_dim()) {
    throw DimensionError("predict: embedding width " + std::to_string(h.cols()) +
                         " plus task information " + std::to_string(task_info.concat.numel()) +
                         " does not match predictor input " +
                         std::to_string(predictor.input_dim()));
  }
  Tensor x = h;
  Tensor ti = task_info.concat;
  if (center_task) {
    const Tensor centroid = reduce(ReduceKind::kMean, stack_rows(task_info.prototypes), 0);
    x = h.rank() == 1 ? sub(h, centroid) : sub(h, repeat_rows(centroid, h.rows()));
    std::vector<Tensor> shifted;
    for (const auto& p : task_info.prototypes) shifted.push_back(sub(p, centroid));
    ti = concat(shifted, 0);
  }
  if (x.rank() == 1) return mlp_forward(predictor, params, concat({x, ti}, 0));
  return mlp_forward(predictor, params, concat({x, repeat_rows(ti, x.rows())}, 1));
}

Tensor predict_metric(const MlpBlock& predictor, const ParameterSet& params, const Tensor& h,
                      const TaskInfo& task_info, const Tensor& scale) {
  if (h.cols() != predictor.input_dim() || task_info.prototypes.empty() ||
      task_info.prototypes.front().numel() != predictor.input_dim()) {
    throw DimensionError("predict: embedding width " + std::to_string(h.cols()) +
                         " does not match predictor input " +
                         std::to_string(predictor.input_dim()));
  }
  const Tensor x = h.rank() == 1 ? reshape(h, {1, h.numel()}) : h;
  const Tensor ph = mlp_forward(predictor, params, normalize_rows(x));
  const Tensor pp = mlp_forward(predictor, params, normalize_rows(stack_rows(task_info.prototypes)));
  std::vector<Tensor> cols;
  for (std::size_t c = 0; c < task_info.prototypes.size(); ++c) {
    const Tensor diff = sub(ph, repeat_rows(row(pp, c), x.rows()));
    cols.push_back(reshape(neg(reduce(ReduceKind::kSum, mul(diff, diff), 1)), {x.rows(), 1}));
  }
  const std::size_t n = task_info.prototypes.size();
  const Tensor s = repeat_rows(reshape(repeat_rows(scale, n), {n}), x.rows());
  const Tensor out = mul(concat(cols, 1), s);
  return h.rank() == 1 ? reshape(out, {out.numel()}) : out;
}

AugmentedBatch augment(const Tensor& rationales, std::span<const int> labels,
                       const Tensor& non_rationales) {
  AugmentedBatch batch;
  if (rationales.numel() == 0 || non_rationales.numel() == 0) return batch;
  if (rationales.rank() != 2 || non_rationales.rank() != 2 ||
      rationales.cols() != non_rationales.cols()) {
    throw DimensionError("augment: rationale stack " + shape_to_string(rationales.shape()) +
                         " and non-rationale stack " +
                         shape_to_string(non_rationales.shape()) + " are incompatible");
  }
  if (labels.size() != rationales.rows()) {
    throw DimensionError("augment: one label per rationale is required");
  }
  const std::size_t s = rationales.rows();
  const std::size_t t = non_rationales.rows();
  std::vector<std::size_t> ri;
  std::vector<std::size_t> ni;
  ri.reserve(s * t);
  ni.reserve(s * t);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      ri.push_back(i);
      ni.push_back(j);
      batch.labels.push_back(labels[i]);
      batch.donors.emplace_back(i, j);
    }
  }
  batch.embeddings = add(gather_rows(rationales, ri), gather_rows(non_rationales, ni));
  return batch;
}

// ---------------------------------------------------------------------------

MseGnn::MseGnn(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  build(seed);
}

MseGnn::MseGnn(const ModelConfig& config) : MseGnn(config, 0) {}

void MseGnn::build(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t d = config_.hidden_dim;
  const std::size_t ti = config_.n_way * d;
  encoder_ = GnnEncoder::create(params_, "encoder", config_.encoder, config_.input_dim, d,
                                config_.layers, ParamTag::kSlow, rng);
  explainer_encoder_ = GnnEncoder::create(params_, "explainer.encoder", config_.encoder,
                                          config_.input_dim, d, config_.layers,
                                          ParamTag::kSlow, rng);
  mask_mlp_ = MlpBlock::create(params_, "explainer.mask", {d + ti, d, 1}, ParamTag::kSlow, rng);
  // The mask starts at 0.5 on every node.
  for (const auto* name : {&mask_mlp_.weights.back(), &mask_mlp_.biases.back()}) {
    auto v = params_.get(*name).mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
  }
  const std::vector<std::size_t> sizes = config_.predictor == PredictorKind::kConcat
                                             ? std::vector<std::size_t>{d + ti, d, config_.n_way}
                                             : std::vector<std::size_t>{d, d, d};
  predictor_ = MlpBlock::create(params_, "predictor", sizes, ParamTag::kFast, rng);
  if (config_.predictor == PredictorKind::kMetric) {
    params_.add(kLogitScale, ParamTag::kSlow, Tensor::zeros({1}));
  }
}

Tensor MseGnn::logits(const ParameterSet& params, const Tensor& h,
                      const TaskInfo& task_info) const {
  if (config_.predictor == PredictorKind::kMetric) {
    return predict_metric(predictor_, params, h, task_info, params.get(kLogitScale));
  }
  return predict(predictor_, params, h, task_info, config_.center_task);
}

TaskInfo MseGnn::task_info(const ParameterSet& params,
                           std::span<const LabeledGraph> support) const {
  return compute_task_info(encoder_, params, support, config_.n_way,
                           config_.transform);
}

Tensor MseGnn::mask(const ParameterSet& params, const Graph& graph,
                    const TaskInfo& task_info) const {
  return explain(explainer_encoder_, mask_mlp_, params, graph, task_info,
                 config_.transform);
}

RationaleOutput MseGnn::rationale(const ParameterSet& params, const Graph& graph,
                                  const TaskInfo& task_info) const {
  RationaleOutput out;
  out.node_embeddings = node_embeddings(encoder_, params, graph, config_.transform);
  out.mask = mask(params, graph, task_info);
  auto parts = decompose(out.node_embeddings, out.mask);
  out.rationale = parts.rationale;
  out.non_rationale = parts.non_rationale;
  return out;
}

EpisodeForward MseGnn::forward_episode(const ParameterSet& params, const Episode& episode,
                                       Phase phase) const {
  if (episode.n_way != config_.n_way) {
    throw TaskError("episode is " + std::to_string(episode.n_way) + "-way but the model is " +
                    std::to_string(config_.n_way) + "-way");
  }
  if (episode.support.empty()) throw TaskError("episode has an empty support set");
  EpisodeForward out;

  // Support graphs are encoded once; their pooled embeddings form the
  // prototypes and their node embeddings feed the decomposition.
  std::vector<Tensor> support_h;
  std::vector<Tensor> support_embeddings;
  std::vector<int> support_labels;
  for (const auto& item : episode.support) {
    support_h.push_back(
        node_embeddings(encoder_, params, *item.graph, config_.transform));
    support_embeddings.push_back(readout(support_h.back()));
    support_labels.push_back(item.label);
  }
  out.task_info = task_info_from_embeddings(support_embeddings, support_labels, config_.n_way);

  auto run = [&](const Graph& g, const Tensor* h) {
    RationaleOutput r;
    r.node_embeddings =
        h ? *h : node_embeddings(encoder_, params, g, config_.transform);
    r.mask = mask(params, g, out.task_info);
    auto parts = decompose(r.node_embeddings, r.mask);
    r.rationale = parts.rationale;
    r.non_rationale = parts.non_rationale;
    return r;
  };
  std::vector<Tensor> rationales;
  std::vector<Tensor> non_rationales;
  for (std::size_t i = 0; i < episode.support.size(); ++i) {
    out.support.push_back(run(*episode.support[i].graph, &support_h[i]));
    rationales.push_back(out.support.back().rationale);
    non_rationales.push_back(out.support.back().non_rationale);
  }
  const Tensor r_stack = stack_rows(rationales);
  out.support_logits = logits(params, r_stack, out.task_info);

  if (!episode.query.empty()) {
    std::vector<Tensor> query_rationales;
    for (const auto& item : episode.query) {
      out.query.push_back(run(*item.graph, nullptr));
      query_rationales.push_back(out.query.back().rationale);
    }
    out.query_logits = logits(params, stack_rows(query_rationales), out.task_info);
  }

  if (phase == Phase::kTrain) {
    out.augmented = augment(r_stack, support_labels, stack_rows(non_rationales));
    if (out.augmented.size() > 0) {
      out.augmented_logits = logits(params, out.augmented.embeddings, out.task_info);
    }
  }
  return out;
}

}  // namespace msegnn
