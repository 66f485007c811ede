#include "run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <sstream>

#include "msegnn/error.hpp"

namespace msegnn::cli {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + text + "' is not a number");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(key + ": '" + text + "' is not a non-negative integer");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": '" + text + "' is not a boolean");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
};

template <typename T>
Field size_field(T RunConfig::*section, std::size_t T::*member) {
  return {[=](const RunConfig& c) { return std::to_string(c.*section.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            c.*section.*member = static_cast<std::size_t>(to_uint(k, v));
          }};
}

template <typename T>
Field u64_field(T RunConfig::*section, std::uint64_t T::*member) {
  return {[=](const RunConfig& c) { return std::to_string(c.*section.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            c.*section.*member = to_uint(k, v);
          }};
}

template <typename T>
Field double_field(T RunConfig::*section, double T::*member) {
  return {[=](const RunConfig& c) { return format_double(c.*section.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            c.*section.*member = to_double(k, v);
          }};
}

Field loss_field(LossWeights MetaConfig::*which, double LossWeights::*member) {
  return {[=](const RunConfig& c) { return format_double(c.meta.*which.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            c.meta.*which.*member = to_double(k, v);
          }};
}

Field generator_size(std::size_t SyntheticConfig::*member) {
  return {[=](const RunConfig& c) { return std::to_string(c.data.generator.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            c.data.generator.*member = static_cast<std::size_t>(to_uint(k, v));
          }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["data.classes"] = size_field(&RunConfig::data, &DataSettings::classes);
    f["data.per_class"] = size_field(&RunConfig::data, &DataSettings::per_class);
    f["data.seed"] = u64_field(&RunConfig::data, &DataSettings::seed);
    f["data.split_seed"] = u64_field(&RunConfig::data, &DataSettings::split_seed);
    f["data.feature_dim"] = generator_size(&SyntheticConfig::feature_dim);
    f["data.base_min"] = generator_size(&SyntheticConfig::base_min);
    f["data.base_max"] = generator_size(&SyntheticConfig::base_max);
    f["data.ba_attach"] = generator_size(&SyntheticConfig::ba_attach);
    f["data.attach_edges"] = generator_size(&SyntheticConfig::attach_edges);
    f["data.feature_noise"] = {
        [](const RunConfig& c) { return format_double(c.data.generator.feature_noise); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.data.generator.feature_noise = to_double(k, v);
        }};
    f["data.split"] = {
        [](const RunConfig& c) {
          return std::to_string(c.data.split[0]) + "," + std::to_string(c.data.split[1]) + "," +
                 std::to_string(c.data.split[2]);
        },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          std::stringstream in(v);
          std::string part;
          std::vector<std::size_t> parts;
          while (std::getline(in, part, ',')) parts.push_back(to_uint(k, trim(part)));
          if (parts.size() != 3) throw ConfigError(k + ": expected three counts 'train,val,test'");
          c.data.split = {parts[0], parts[1], parts[2]};
        }};

    f["model.encoder"] = {
        [](const RunConfig& c) { return std::string(encoder_name(c.model.encoder)); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          try {
            c.model.encoder = parse_encoder(v);
          } catch (const ConfigError& e) {
            throw ConfigError(k + ": " + e.what());
          }
        }};
    f["model.hidden_dim"] = size_field(&RunConfig::model, &ModelConfig::hidden_dim);
    f["model.layers"] = size_field(&RunConfig::model, &ModelConfig::layers);
    f["model.transform"] = {
        [](const RunConfig& c) { return transform_name(c.model.transform); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          try {
            c.model.transform = parse_transform(v);
          } catch (const ConfigError& e) {
            throw ConfigError(k + ": " + e.what());
          }
        }};
    f["model.predictor"] = {
        [](const RunConfig& c) { return predictor_name(c.model.predictor); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          try {
            c.model.predictor = parse_predictor(v);
          } catch (const ConfigError& e) {
            throw ConfigError(k + ": " + e.what());
          }
        }};
    f["model.center_task"] = {
        [](const RunConfig& c) { return std::string(c.model.center_task ? "true" : "false"); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.model.center_task = to_bool(k, v);
        }};

    f["meta.n_way"] = size_field(&RunConfig::meta, &MetaConfig::n_way);
    f["meta.k_shot"] = size_field(&RunConfig::meta, &MetaConfig::k_shot);
    f["meta.query_per_class"] = size_field(&RunConfig::meta, &MetaConfig::query_per_class);
    f["meta.local_lr"] = double_field(&RunConfig::meta, &MetaConfig::local_lr);
    f["meta.global_lr"] = double_field(&RunConfig::meta, &MetaConfig::global_lr);
    f["meta.local_steps"] = size_field(&RunConfig::meta, &MetaConfig::local_steps);
    f["meta.episodes_per_meta_update"] =
        size_field(&RunConfig::meta, &MetaConfig::episodes_per_meta_update);
    f["meta.max_meta_iterations"] = size_field(&RunConfig::meta, &MetaConfig::max_meta_iterations);
    f["meta.patience"] = size_field(&RunConfig::meta, &MetaConfig::patience);
    f["meta.eval_every"] = size_field(&RunConfig::meta, &MetaConfig::eval_every);
    f["meta.val_episodes"] = size_field(&RunConfig::meta, &MetaConfig::val_episodes);
    f["meta.seed"] = u64_field(&RunConfig::meta, &MetaConfig::seed);
    f["meta.local_optimizer"] = {
        [](const RunConfig& c) {
          return std::string(c.meta.local_optimizer == LocalOptimizer::kAdam ? "adam" : "sgd");
        },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "adam") {
            c.meta.local_optimizer = LocalOptimizer::kAdam;
          } else if (v == "sgd") {
            c.meta.local_optimizer = LocalOptimizer::kSgd;
          } else {
            throw ConfigError(k + ": expected 'adam' or 'sgd', got '" + v + "'");
          }
        }};
    f["meta.exact_meta_gradient"] = {
        [](const RunConfig& c) { return std::string(c.meta.exact_meta_gradient ? "true" : "false"); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.meta.exact_meta_gradient = to_bool(k, v);
        }};

    for (const auto& [section, which] :
         {std::pair{std::string("loss.local"), &MetaConfig::local_weights},
          std::pair{std::string("loss.global"), &MetaConfig::global_weights}}) {
      f[section + ".alpha_r"] = loss_field(which, &LossWeights::alpha_r);
      f[section + ".alpha_a"] = loss_field(which, &LossWeights::alpha_a);
      f[section + ".alpha_reg"] = loss_field(which, &LossWeights::alpha_reg);
      f[section + ".gamma"] = loss_field(which, &LossWeights::gamma);
      f[section + ".tau"] = loss_field(which, &LossWeights::tau);
    }

    f["eval.episodes"] = size_field(&RunConfig::eval, &EvalSettings::episodes);
    f["eval.seed"] = u64_field(&RunConfig::eval, &EvalSettings::seed);
    return f;
  }();
  return table;
}

}  // namespace

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> out;
  for (const auto& [key, field] : fields()) out[key] = field.get(*this);
  return out;
}

void RunConfig::apply(const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError(key + ": unknown configuration key");
    it->second.set(*this, key, trim(value));
  }
  model.input_dim = data.generator.feature_dim;
  model.n_way = meta.n_way;
}

void RunConfig::validate_data() const {
  try {
    data.generator.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("data: ") + e.what());
  }
  if (data.classes < 2) throw ConfigError("data.classes: must be at least 2");
  if (data.per_class < 1) throw ConfigError("data.per_class: must be at least 1");
}

void RunConfig::validate() const {
  validate_data();
  auto wrap = [](const std::string& section, const std::function<void()>& check) {
    try {
      check();
    } catch (const ConfigError& e) {
      throw ConfigError(section + ": " + e.what());
    }
  };
  if (data.split[0] + data.split[1] + data.split[2] != data.classes) {
    throw ConfigError("data.split: counts must sum to data.classes (" +
                      std::to_string(data.classes) + ")");
  }
  wrap("model", [&] { model.validate(); });
  wrap("meta", [&] { meta.validate(); });
  if (meta.n_way != model.n_way) throw ConfigError("meta.n_way: differs from the model's n_way");
  if (eval.episodes < 1) throw ConfigError("eval.episodes: must be at least 1");
}

std::string RunConfig::to_ini() const {
  std::ostringstream out;
  std::string current;
  for (const auto& [key, value] : to_map()) {
    const auto dot = key.rfind('.');
    const std::string section = key.substr(0, dot);
    if (section != current) {
      if (!current.empty()) out << "\n";
      out << "[" << section << "]\n";
      current = section;
    }
    out << key.substr(dot + 1) << " = " << value << "\n";
  }
  return out.str();
}

std::string RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, value] : to_map()) j[key] = value;
  return j.dump();
}

std::string RunConfig::fingerprint() const { return fnv1a_hex(to_ini()); }

RunConfig preset(const std::string& name) {
  if (name == "synthetic-2way5shot") {
    RunConfig c;
    c.model.layers = 3;
    c.apply({});
    return c;
  }
  if (name == "toy") {
    RunConfig c;
    c.data.classes = 6;
    c.data.per_class = 20;
    c.data.split = {2, 2, 2};
    c.data.generator.feature_dim = 4;
    c.data.generator.base_min = 8;
    c.data.generator.base_max = 12;
    c.data.generator.ba_attach = 2;
    c.model.hidden_dim = 8;
    c.model.layers = 2;
    c.meta.k_shot = 2;
    c.meta.query_per_class = 3;
    c.meta.max_meta_iterations = 40;
    c.meta.eval_every = 20;
    c.meta.val_episodes = 4;
    c.eval.episodes = 10;
    c.apply({});
    return c;
  }
  throw ConfigError("preset: unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() { return {"synthetic-2way5shot", "toy"}; }

std::map<std::string, std::string> parse_ini(const std::string& text) {
  std::stringstream cleaned;
  std::stringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (!t.empty() && t[0] == '#') continue;
    cleaned << line << "\n";
  }
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(cleaned, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }
  std::map<std::string, std::string> out;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      out[section] = body.data();
      continue;
    }
    for (const auto& [key, value] : body) out[section + "." + key] = value.data();
  }
  return out;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_ini(buf.str());
}

std::pair<std::string, std::string> parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set: expected 'section.key=value', got '" + text + "'");
  }
  return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace msegnn::cli
