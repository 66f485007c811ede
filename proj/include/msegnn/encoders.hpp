#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "msegnn/graph.hpp"
#include "msegnn/parameters.hpp"
#include "msegnn/rng.hpp"
#include "msegnn/tensor.hpp"

namespace msegnn {

enum class EncoderKind { kGin, kGraphSage };

const char* encoder_name(EncoderKind kind);
EncoderKind parse_encoder(const std::string& name);

enum class FinalActivation { kNone, kSigmoid };

// Affine layers with ReLU in between. Holds parameter names only; values
// live in a ParameterSet so fast parameters can be swapped per task.
struct MlpBlock {
  std::vector<std::size_t> sizes;  // input, hidden..., output
  std::vector<std::string> weights;
  std::vector<std::string> biases;
  FinalActivation final_activation = FinalActivation::kNone;

  // Glorot-uniform weights, biases uniform in +-1/sqrt(fan_in).
  static MlpBlock create(ParameterSet& params, const std::string& prefix,
                         std::vector<std::size_t> sizes, ParamTag tag, Rng& rng,
                         FinalActivation final_activation = FinalActivation::kNone);

  std::size_t input_dim() const { return sizes.front(); }
  std::size_t output_dim() const { return sizes.back(); }
};

// x is [k] (one row) or [m, k].
Tensor mlp_forward(const MlpBlock& block, const ParameterSet& params, const Tensor& x);

// Stack of GIN or GraphSAGE layers.
//   GIN:       h_v <- MLP(h_v + sum_{u in N(v)} h_u)   (epsilon fixed at 0)
//   GraphSAGE: h_v <- ReLU(W [h_v || mean_{u in N(v)} h_u] + b)
// GIN layers are separated by ReLU; the last GIN layer has none.
struct GnnEncoder {
  EncoderKind kind = EncoderKind::kGin;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::vector<MlpBlock> layers;

  static GnnEncoder create(ParameterSet& params, const std::string& prefix, EncoderKind kind,
                           std::size_t input_dim, std::size_t hidden_dim,
                           std::size_t layer_count, ParamTag tag, Rng& rng);
};

// Node embeddings [n, hidden_dim].
Tensor encode(const GnnEncoder& encoder, const ParameterSet& params, const Graph& graph);

// Mean over rows: [n, d] -> [d]. With weights [n], rows are scaled by their
// weight before pooling (the divisor stays n).
Tensor readout(const Tensor& node_embeddings);
Tensor readout(const Tensor& node_embeddings, const Tensor& weights);

}  // namespace msegnn
