#pragma once

#include <filesystem>
#include <string>

#include "msegnn/model.hpp"
#include "msegnn/parameters.hpp"

namespace msegnn {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ParameterSet params;
  std::string run_config_json;  // provenance, may be empty
  std::string config_fingerprint;
};

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

// JSON archive: {format_version, model, tensors: [{name, tag, shape, values}],
// run_config?, config_fingerprint?}.
std::string checkpoint_to_json(const ModelConfig& config, const ParameterSet& params,
                               const std::string& run_config_json = "",
                               const std::string& fingerprint = "");
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ParameterSet& params, const std::string& run_config_json = "",
                     const std::string& fingerprint = "");

// Validates names, tags and shapes against the architecture implied by the
// stored model config; throws ValidationError on any mismatch.
Checkpoint checkpoint_from_json(const std::string& text);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace msegnn
