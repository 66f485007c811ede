#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "msegnn/metatrain.hpp"
#include "msegnn/model.hpp"
#include "msegnn/synthetic.hpp"

namespace msegnn::cli {

struct DataSettings {
  std::size_t classes = 10;
  std::size_t per_class = 500;
  std::uint64_t seed = 7;
  SyntheticConfig generator;
  std::array<std::size_t, 3> split{5, 2, 3};
  std::uint64_t split_seed = 7;
};

struct EvalSettings {
  std::size_t episodes = 200;
  std::uint64_t seed = 1;
};

// Everything a command needs. Built from a preset, then a config file, then
// command-line overrides, each layer replacing keys of the previous one.
struct RunConfig {
  DataSettings data;
  ModelConfig model;
  MetaConfig meta;
  EvalSettings eval;

  // Flat "section.key" -> value view, sorted by key.
  std::map<std::string, std::string> to_map() const;
  // Applies every entry; unknown keys and unparsable values raise ConfigError
  // naming the key.
  void apply(const std::map<std::string, std::string>& values);
  // Generator settings only; enough for gen-data.
  void validate_data() const;
  void validate() const;

  std::string to_ini() const;
  std::string to_json() const;
  // 16 hex digits, FNV-1a over to_ini().
  std::string fingerprint() const;
};

RunConfig preset(const std::string& name);
std::vector<std::string> preset_names();

// INI text: [section] headers and key = value lines; ';' and '#' comments.
std::map<std::string, std::string> parse_ini(const std::string& text);
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

// "section.key=value".
std::pair<std::string, std::string> parse_assignment(const std::string& text);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace msegnn::cli
