#include "msegnn/encoders.hpp"

#include <cmath>

#include "msegnn/error.hpp"

namespace msegnn {

const char* encoder_name(EncoderKind kind) {
  return kind == EncoderKind::kGin ? "gin" : "graphsage";
}

EncoderKind parse_encoder(const std::string& name) {
  if (name == "gin") return EncoderKind::kGin;
  if (name == "graphsage" || name == "sage") return EncoderKind::kGraphSage;
  throw ConfigError("encoder must be 'gin' or 'graphsage', got '" + name + "'");
}

MlpBlock MlpBlock::create(ParameterSet& params, const std::string& prefix,
                          std::vector<std::size_t> sizes, ParamTag tag, Rng& rng,
                          FinalActivation final_activation) {
  if (sizes.size() < 2) throw ConfigError("MLP needs at least an input and output size");
  MlpBlock block;
  block.sizes = std::move(sizes);
  block.final_activation = final_activation;
  for (std::size_t l = 0; l + 1 < block.sizes.size(); ++l) {
    const std::size_t in = block.sizes[l];
    const std::size_t out = block.sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> w(in * out);
    for (double& x : w) x = rng.uniform(-bound, bound);
    const std::string wn = prefix + ".w" + std::to_string(l);
    const std::string bn = prefix + ".b" + std::to_string(l);
    params.add(wn, tag, Tensor::from({in, out}, std::move(w)));
    const double bias_bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> b(out);
    for (double& x : b) x = rng.uniform(-bias_bound, bias_bound);
    params.add(bn, tag, Tensor::from({out}, std::move(b)));
    block.weights.push_back(wn);
    block.biases.push_back(bn);
  }
  return block;
}

Tensor mlp_forward(const MlpBlock& block, const ParameterSet& params, const Tensor& x) {
  if (x.cols() != block.input_dim()) {
    throw DimensionError("mlp: input of shape " + shape_to_string(x.shape()) +
                         " does not match input dimension " +
                         std::to_string(block.input_dim()));
  }
  Tensor h = x;
  for (std::size_t l = 0; l < block.weights.size(); ++l) {
    h = add(matmul(h, params.get(block.weights[l])), params.get(block.biases[l]));
    if (l + 1 < block.weights.size()) h = relu(h);
  }
  if (block.final_activation == FinalActivation::kSigmoid) h = sigmoid(h);
  return h;
}

GnnEncoder GnnEncoder::create(ParameterSet& params, const std::string& prefix,
                              EncoderKind kind, std::size_t input_dim, std::size_t hidden_dim,
                              std::size_t layer_count, ParamTag tag, Rng& rng) {
  if (layer_count < 1) throw ConfigError("encoder needs at least one layer");
  if (input_dim == 0 || hidden_dim == 0) throw ConfigError("encoder dimensions must be positive");
  GnnEncoder enc;
  enc.kind = kind;
  enc.input_dim = input_dim;
  enc.hidden_dim = hidden_dim;
  for (std::size_t l = 0; l < layer_count; ++l) {
    const std::size_t in = l == 0 ? input_dim : hidden_dim;
    const std::string name = prefix + ".layer" + std::to_string(l);
    if (kind == EncoderKind::kGin) {
      enc.layers.push_back(MlpBlock::create(params, name, {in, hidden_dim, hidden_dim}, tag, rng));
    } else {
      enc.layers.push_back(MlpBlock::create(params, name, {2 * in, hidden_dim}, tag, rng));
    }
  }
  return enc;
}

Tensor encode(const GnnEncoder& encoder, const ParameterSet& params, const Graph& graph) {
  if (graph.feature_dim() != encoder.input_dim) {
    throw DimensionError("encode: graph " + std::to_string(graph.id()) + " has " +
                         std::to_string(graph.feature_dim()) +
                         "-dimensional features, encoder expects " +
                         std::to_string(encoder.input_dim));
  }
  Tensor h = graph.feature_tensor();
  if (encoder.kind == EncoderKind::kGin) {
    const Tensor adj = graph.adjacency_tensor();
    for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
      h = mlp_forward(encoder.layers[l], params, add(h, matmul(adj, h)));
      if (l + 1 < encoder.layers.size()) h = relu(h);
    }
  } else {
    const Tensor adj = graph.mean_adjacency_tensor();
    for (const auto& layer : encoder.layers) {
      h = relu(mlp_forward(layer, params, concat({h, matmul(adj, h)}, 1)));
    }
  }
  return h;
}

Tensor readout(const Tensor& node_embeddings) {
  if (node_embeddings.rank() != 2) throw RankError("readout: expects [n, d] embeddings");
  return reduce(ReduceKind::kMean, node_embeddings, 0);
}

Tensor readout(const Tensor& node_embeddings, const Tensor& weights) {
  if (node_embeddings.rank() != 2) throw RankError("readout: expects [n, d] embeddings");
  const std::size_t n = node_embeddings.rows();
  if (weights.rank() != 1 || weights.numel() != n) {
    throw DimensionError("readout: weights of shape " + shape_to_string(weights.shape()) +
                         " do not match " + std::to_string(n) + " nodes");
  }
  if (n == 0) throw EmptyReductionError("readout: graph has no nodes");
  for (double w : weights.values()) {
    if (!(w >= 0.0 && w <= 1.0)) throw DomainError("readout: weights must lie in [0, 1]");
  }
  return scale(matmul(weights, node_embeddings), 1.0 / static_cast<double>(n));
}

}  // namespace msegnn
