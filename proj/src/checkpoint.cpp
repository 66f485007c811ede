#include "msegnn/checkpoint.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "msegnn/error.hpp"

namespace msegnn {

using nlohmann::ordered_json;

namespace {

ordered_json model_json(const ModelConfig& c) {
  ordered_json j;
  j["encoder"] = encoder_name(c.encoder);
  j["input_dim"] = c.input_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["layers"] = c.layers;
  j["n_way"] = c.n_way;
  j["transform"] = transform_name(c.transform);
  j["predictor"] = predictor_name(c.predictor);
  j["center_task"] = c.center_task;
  return j;
}

ModelConfig model_from(const nlohmann::json& j) {
  ModelConfig c;
  c.encoder = parse_encoder(j.at("encoder").get<std::string>());
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.n_way = j.at("n_way").get<std::size_t>();
  c.transform = parse_transform(j.at("transform").get<std::string>());
  c.predictor = parse_predictor(j.at("predictor").get<std::string>());
  c.center_task = j.at("center_task").get<bool>();
  c.validate();
  return c;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) { return model_json(config).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  try {
    return model_from(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
}

std::string checkpoint_to_json(const ModelConfig& config, const ParameterSet& params,
                               const std::string& run_config_json,
                               const std::string& fingerprint) {
  ordered_json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["model"] = model_json(config);
  ordered_json tensors = ordered_json::array();
  for (const auto& e : params.entries()) {
    ordered_json t;
    t["name"] = e.name;
    t["tag"] = tag_name(e.tag);
    t["shape"] = e.tensor.shape();
    t["values"] = e.tensor.to_vector();
    tensors.push_back(std::move(t));
  }
  j["tensors"] = std::move(tensors);
  if (!run_config_json.empty()) j["run_config"] = ordered_json::parse(run_config_json);
  if (!fingerprint.empty()) j["config_fingerprint"] = fingerprint;
  return j.dump();
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ParameterSet& params, const std::string& run_config_json,
                     const std::string& fingerprint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << checkpoint_to_json(config, params, run_config_json, fingerprint) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint checkpoint_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(1, std::string("checkpoint: ") + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw ValidationError("checkpoint: unsupported format_version");
    }
    Checkpoint ck;
    ck.config = model_from(j.at("model"));
    MseGnn reference(ck.config);
    const auto& expected = reference.params().entries();
    const auto& tensors = j.at("tensors");
    if (tensors.size() != expected.size()) {
      throw ValidationError("checkpoint: holds " + std::to_string(tensors.size()) +
                            " tensors, the model config implies " +
                            std::to_string(expected.size()));
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const auto& t = tensors[i];
      const auto name = t.at("name").get<std::string>();
      const auto tag = parse_tag(t.at("tag").get<std::string>());
      const auto shape = t.at("shape").get<Shape>();
      auto values = t.at("values").get<std::vector<double>>();
      const auto& want = expected[i];
      if (name != want.name || tag != want.tag || shape != want.tensor.shape()) {
        throw ValidationError("checkpoint: tensor '" + name + "' (" + tag_name(tag) + ", " +
                              shape_to_string(shape) + ") does not match expected '" +
                              want.name + "' (" + tag_name(want.tag) + ", " +
                              shape_to_string(want.tensor.shape()) + ")");
      }
      ck.params.add(name, tag, Tensor::from(shape, std::move(values)));
    }
    if (auto it = j.find("run_config"); it != j.end()) ck.run_config_json = it->dump();
    ck.config_fingerprint = j.value("config_fingerprint", "");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace msegnn
