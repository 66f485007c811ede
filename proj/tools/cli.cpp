#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <sstream>

#include "msegnn/checkpoint.hpp"
#include "msegnn/dataset_io.hpp"
#include "msegnn/error.hpp"
#include "msegnn/evalkit.hpp"
#include "msegnn/metatrain.hpp"
#include "msegnn/synthetic.hpp"
#include "run_config.hpp"

namespace msegnn::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// A command-line flag that, when given, sets one or more config keys.
struct FlagBinding {
  std::string value;
  CLI::Option* option = nullptr;
  std::vector<std::string> keys;
};

struct Options {
  std::string config_path;
  std::string preset = "synthetic-2way5shot";
  std::string out_dir = "msegnn-out";
  std::vector<std::string> assignments;
  std::string seed;
  CLI::Option* seed_option = nullptr;
  CLI::Option* out_dir_option = nullptr;

  std::string data;
  std::string out_file;
  std::string ckpt = "best";
  bool dot = false;
  std::vector<std::unique_ptr<FlagBinding>> flags;
};

void bind(CLI::App& cmd, Options& o, const std::string& name, std::vector<std::string> keys,
          const std::string& help) {
  auto b = std::make_unique<FlagBinding>();
  b->keys = std::move(keys);
  b->option = cmd.add_option(name, b->value, help);
  o.flags.push_back(std::move(b));
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory '" + dir.string() + "'");
  }
}

std::map<std::string, std::string> flat_json(const std::string& text) {
  std::map<std::string, std::string> out;
  if (text.empty()) return out;
  const auto j = nlohmann::json::parse(text);
  for (const auto& [k, v] : j.items()) out[k] = v.is_string() ? v.get<std::string>() : v.dump();
  return out;
}

// preset, then the run config embedded in a checkpoint, then --config, then
// flags, then --set; each layer overrides the previous one.
RunConfig resolve(const Options& o, const std::string& seed_key,
                  const std::string& embedded_json = "") {
  RunConfig cfg = preset(o.preset);
  cfg.apply(flat_json(embedded_json));
  if (!o.config_path.empty()) cfg.apply(read_config_file(o.config_path));
  std::map<std::string, std::string> overrides;
  for (const auto& f : o.flags) {
    if (f->option->count() == 0) continue;
    for (const auto& k : f->keys) overrides[k] = f->value;
  }
  if (o.seed_option->count() > 0) overrides[seed_key] = o.seed;
  cfg.apply(overrides);
  overrides.clear();
  for (const auto& a : o.assignments) {
    const auto [k, v] = parse_assignment(a);
    overrides[k] = v;
  }
  cfg.apply(overrides);
  return cfg;
}

// The dataset decides its own shape.
Dataset load_into(RunConfig& cfg, const Options& o) {
  if (o.data.empty()) throw ConfigError("--data: a dataset file is required");
  Dataset ds = load_dataset(fs::path(o.data));
  cfg.data.generator.feature_dim = ds.feature_dim();
  cfg.data.classes = ds.num_classes();
  cfg.apply({});
  return ds;
}

DatasetSplit make_split(const RunConfig& cfg) {
  return split_classes(cfg.data.classes, cfg.data.split, cfg.data.split_seed);
}

void check_matches_checkpoint(const RunConfig& cfg, const ModelConfig& ck) {
  auto mismatch = [](const std::string& key, const std::string& have, const std::string& want) {
    throw ConfigError(key + ": checkpoint has " + want + " but the configuration has " + have);
  };
  const ModelConfig& m = cfg.model;
  if (m.input_dim != ck.input_dim)
    mismatch("data.feature_dim", std::to_string(m.input_dim), std::to_string(ck.input_dim));
  if (m.encoder != ck.encoder) mismatch("model.encoder", encoder_name(m.encoder), encoder_name(ck.encoder));
  if (m.hidden_dim != ck.hidden_dim)
    mismatch("model.hidden_dim", std::to_string(m.hidden_dim), std::to_string(ck.hidden_dim));
  if (m.layers != ck.layers)
    mismatch("model.layers", std::to_string(m.layers), std::to_string(ck.layers));
  if (m.n_way != ck.n_way) mismatch("meta.n_way", std::to_string(m.n_way), std::to_string(ck.n_way));
  if (m.transform != ck.transform)
    mismatch("model.transform", transform_name(m.transform), transform_name(ck.transform));
  if (m.predictor != ck.predictor)
    mismatch("model.predictor", predictor_name(m.predictor), predictor_name(ck.predictor));
  if (m.center_task != ck.center_task)
    mismatch("model.center_task", m.center_task ? "true" : "false", ck.center_task ? "true" : "false");
}

fs::path checkpoint_path(const Options& o) {
  if (o.ckpt == "best" || o.ckpt == "last") {
    return fs::path(o.out_dir) / ("checkpoint_" + o.ckpt + ".json");
  }
  return fs::path(o.ckpt);
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_run_config(const fs::path& dir, const RunConfig& cfg) {
  write_file(dir / "run_config.ini",
             "; fingerprint " + cfg.fingerprint() + "\n" + cfg.to_ini());
}

int cmd_gen_data(const Options& o, std::ostream& out) {
  RunConfig cfg = resolve(o, "data.seed");
  cfg.validate_data();
  const bool explicit_dir = o.out_dir_option->count() > 0;
  const fs::path dir(o.out_dir);
  fs::path path = o.out_file.empty() ? dir / "dataset.jsonl" : fs::path(o.out_file);
  if (o.out_file.empty() || explicit_dir) ensure_dir(dir);
  Dataset ds = generate_synthetic(cfg.data.classes, cfg.data.per_class, cfg.data.seed,
                                  cfg.data.generator);
  save_dataset(ds, path);
  if (o.out_file.empty() || explicit_dir) write_run_config(dir, cfg);
  out << "wrote " << path.string() << "\n"
      << "classes " << ds.num_classes() << "\n"
      << "graphs " << ds.size() << "\n"
      << "mean_nodes " << fixed(ds.mean_nodes(), 2) << "\n"
      << "mean_edges " << fixed(ds.mean_edges(), 2) << "\n"
      << "feature_dim " << ds.feature_dim() << "\n";
  return kExitOk;
}

int cmd_meta_train(const Options& o, std::ostream& out) {
  RunConfig cfg = resolve(o, "meta.seed");
  Dataset ds = load_into(cfg, o);
  cfg.validate();
  const DatasetSplit split = make_split(cfg);
  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  write_run_config(dir, cfg);
  const std::string fp = cfg.fingerprint();
  const std::string run_json = cfg.to_json();

  MseGnn model(cfg.model, cfg.meta.seed);
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
  if (!log) throw IoError("cannot open '" + (dir / "train_log.jsonl").string() + "' for writing");
  MetaTrainHooks hooks;
  hooks.on_record = [&](const LogRecord& r) {
    ordered_json j;
    j["episode"] = r.episode_idx;
    j["support_loss"] = r.support_loss;
    j["query_loss"] = r.query_loss;
    if (r.val_accuracy) j["val_accuracy"] = *r.val_accuracy;
    j["wall_ms"] = r.wall_ms;
    j["config_fingerprint"] = fp;
    log << j.dump() << '\n';
    if (r.val_accuracy) {
      out << "episode " << r.episode_idx << " support_loss " << fixed(r.support_loss)
          << " query_loss " << fixed(r.query_loss) << " val_accuracy "
          << fixed(*r.val_accuracy) << "\n";
    }
  };
  const MetaTrainResult result = meta_train(model, ds, split, cfg.meta, hooks);
  log.flush();
  if (!log) throw IoError("failed writing the training log");

  save_checkpoint(dir / "checkpoint_best.json", cfg.model, result.best, run_json, fp);
  save_checkpoint(dir / "checkpoint_last.json", cfg.model, result.last, run_json, fp);

  ordered_json summary;
  summary["episodes_run"] = result.episodes_run;
  summary["best_episode"] = result.best_episode;
  if (result.best_val_accuracy) summary["best_val_accuracy"] = *result.best_val_accuracy;
  if (result.last_val_accuracy) summary["last_val_accuracy"] = *result.last_val_accuracy;
  summary["local_adapt_calls"] = result.local_adapt_calls;
  summary["slow_hash_violations"] = result.slow_hash_violations;
  summary["stop_reason"] = result.stop_reason;
  summary["config_fingerprint"] = fp;
  write_file(dir / "train_summary.json", summary.dump(2) + "\n");

  if (split.val_classes.size() >= cfg.meta.n_way && cfg.meta.val_episodes > 0) {
    const TestSummary val = test_protocol(model, result.best, ds, split.val_classes, cfg.meta,
                                          cfg.meta.val_episodes, cfg.eval.seed, fp);
    write_file(dir / "report_val_accuracy.json", val.accuracy->to_json() + "\n");
    out << "validation accuracy " << fixed(val.accuracy->mean) << " (best checkpoint, episode "
        << result.best_episode << ")\n";
  }
  out << "episodes " << result.episodes_run << " stop " << result.stop_reason << "\n";
  return kExitOk;
}

struct Loaded {
  RunConfig cfg;
  Dataset ds;
  DatasetSplit split;
  Checkpoint ck;
};

Loaded load_for_inference(const Options& o) {
  Loaded l;
  l.ck = load_checkpoint(checkpoint_path(o));
  l.cfg = resolve(o, "eval.seed", l.ck.run_config_json);
  l.ds = load_into(l.cfg, o);
  l.cfg.validate();
  check_matches_checkpoint(l.cfg, l.ck.config);
  l.split = make_split(l.cfg);
  if (l.split.test_classes.size() < l.cfg.meta.n_way) {
    throw ConfigError("data.split: the test split has fewer than meta.n_way classes");
  }
  return l;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  Loaded l = load_for_inference(o);
  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  write_run_config(dir, l.cfg);
  const std::string fp = l.cfg.fingerprint();
  MseGnn model(l.ck.config);
  const TestSummary s = test_protocol(model, l.ck.params, l.ds, l.split.test_classes, l.cfg.meta,
                                      l.cfg.eval.episodes, l.cfg.eval.seed, fp);
  write_file(dir / "report_accuracy.json", s.accuracy->to_json() + "\n");
  out << "accuracy " << fixed(s.accuracy->mean) << " +- " << fixed(s.accuracy->std) << "\n";
  if (s.auc) {
    write_file(dir / "report_auc.json", s.auc->to_json() + "\n");
    out << "auc " << fixed(s.auc->mean) << " +- " << fixed(s.auc->std) << "\n";
  }
  if (s.explanation_auc) {
    write_file(dir / "report_explanation_auc.json", s.explanation_auc->to_json() + "\n");
    out << "explanation_auc " << fixed(s.explanation_auc->mean) << " +- "
        << fixed(s.explanation_auc->std) << "\n";
  } else {
    err << "warning: no usable truth masks in the test classes; explanation report skipped\n";
  }
  if (s.skipped_graphs > 0) {
    err << "warning: " << s.skipped_graphs
        << " query graphs had single-class truth masks and were skipped\n";
  }
  return kExitOk;
}

// Darker fill for higher mask values.
std::string dot_graph(const Graph& g, const Tensor& mask, std::size_t episode) {
  std::ostringstream s;
  s << "graph episode" << episode << "_graph" << g.id() << " {\n"
    << "  node [shape=circle, style=filled];\n";
  const auto m = mask.values();
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    const double x = std::clamp(m[v], 0.0, 1.0);
    const int shade = static_cast<int>(std::lround(255.0 * (1.0 - x)));
    char color[8];
    std::snprintf(color, sizeof color, "#%02x%02x%02x", shade, shade, shade);
    s << "  n" << v << " [label=\"" << v << "\", fillcolor=\"" << color << "\", fontcolor=\""
      << (x > 0.5 ? "white" : "black") << "\", tooltip=\"" << fixed(m[v], 6) << "\"";
    if (g.truth_mask() && (*g.truth_mask())[v]) s << ", penwidth=3";
    s << "];\n";
  }
  for (const auto& [u, v] : g.undirected_edges()) s << "  n" << u << " -- n" << v << ";\n";
  s << "}\n";
  return s.str();
}

int cmd_explain(const Options& o, std::ostream& out) {
  Loaded l = load_for_inference(o);
  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  write_run_config(dir, l.cfg);
  if (o.dot) ensure_dir(dir / "dot");
  const std::string fp = l.cfg.fingerprint();
  MseGnn model(l.ck.config);
  const MetaConfig& meta = l.cfg.meta;

  std::ofstream records(dir / "explanations.jsonl", std::ios::binary);
  if (!records) throw IoError("cannot open '" + (dir / "explanations.jsonl").string() + "'");
  // Same episode stream as eval with the same seed.
  Rng rng(l.cfg.eval.seed);
  std::size_t written = 0;
  for (std::size_t e = 0; e < l.cfg.eval.episodes; ++e) {
    const Episode ep = sample_episode(l.ds, l.split.test_classes, meta.n_way, meta.k_shot,
                                      meta.query_per_class, rng);
    const EpisodeEvaluation ev = evaluate_episode(model, l.ck.params, ep, meta);
    for (std::size_t q = 0; q < ep.query.size(); ++q) {
      const Graph& g = *ep.query[q].graph;
      ordered_json j;
      j["episode"] = e;
      j["graph_id"] = g.id();
      j["class"] = g.label();
      j["label"] = ep.query[q].label;
      j["predicted"] = ev.predictions[q];
      j["mask"] = ev.query_masks[q].to_vector();
      if (g.truth_mask()) j["truth_mask"] = *g.truth_mask();
      j["config_fingerprint"] = fp;
      records << j.dump() << '\n';
      if (o.dot) {
        write_file(dir / "dot" /
                       ("episode" + std::to_string(e) + "_graph" + std::to_string(g.id()) + ".dot"),
                   dot_graph(g, ev.query_masks[q], e));
      }
      ++written;
    }
  }
  records.flush();
  if (!records) throw IoError("failed writing explanations");
  out << "explanations " << written << " -> " << (dir / "explanations.jsonl").string() << "\n";
  return kExitOk;
}

int fail(std::ostream& err, int code, const std::string& kind, const std::string& what) {
  err << "error [" << kind << "]: " << what << "\n";
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot self-explaining graph classification", "msegnn"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_path, "INI config file");
  app.add_option("--preset", o.preset, "Base preset")->capture_default_str();
  app.add_option("--set", o.assignments, "Override: section.key=value (repeatable)");
  o.seed_option = app.add_option("--seed", o.seed, "Seed for the command's random stream");
  o.out_dir_option = app.add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  bind(*gen, o, "--classes", {"data.classes"}, "Number of classes");
  bind(*gen, o, "--per-class", {"data.per_class"}, "Graphs per class");
  bind(*gen, o, "--feature-dim", {"data.feature_dim"}, "Node feature dimension");
  gen->add_option("--out", o.out_file, "Dataset file (default <out-dir>/dataset.jsonl)");

  auto* train = app.add_subcommand("meta-train", "Meta-train a model");
  train->add_option("--data", o.data, "Dataset file")->required();
  bind(*train, o, "--n-way", {"meta.n_way"}, "Classes per task");
  bind(*train, o, "--k-shot", {"meta.k_shot"}, "Support graphs per class");
  bind(*train, o, "--query", {"meta.query_per_class"}, "Query graphs per class");
  bind(*train, o, "--encoder", {"model.encoder"}, "gin or graphsage");
  bind(*train, o, "--hidden", {"model.hidden_dim"}, "Hidden dimension");
  bind(*train, o, "--layers", {"model.layers"}, "Message-passing layers");
  bind(*train, o, "--gamma", {"loss.local.gamma", "loss.global.gamma"}, "Target rationale fraction");
  bind(*train, o, "--T", {"meta.local_steps"}, "Local update steps");
  bind(*train, o, "--local-lr", {"meta.local_lr"}, "Fast-parameter learning rate");
  bind(*train, o, "--global-lr", {"meta.global_lr"}, "Meta learning rate");
  bind(*train, o, "--iterations", {"meta.max_meta_iterations"}, "Training episodes");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on test tasks");
  auto* explain = app.add_subcommand("explain", "Export query-graph explanations");
  for (auto* cmd : {eval, explain}) {
    cmd->add_option("--data", o.data, "Dataset file")->required();
    cmd->add_option("--ckpt", o.ckpt, "best, last or a checkpoint path")->capture_default_str();
    bind(*cmd, o, "--episodes", {"eval.episodes"}, "Test episodes");
    bind(*cmd, o, "--T", {"meta.local_steps"}, "Local update steps");
    bind(*cmd, o, "--query", {"meta.query_per_class"}, "Query graphs per class");
  }
  explain->add_flag("--dot", o.dot, "Also write one DOT file per query graph");
  for (auto* cmd : {gen, train, eval, explain}) cmd->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return fail(err, kExitConfig, "config", e.what());
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o, out);
    if (train->parsed()) return cmd_meta_train(o, out);
    if (eval->parsed()) return cmd_eval(o, out, err);
    return cmd_explain(o, out);
  } catch (const NumericError& e) {
    return fail(err, kExitNumeric, e.kind(), e.what());
  } catch (const IoError& e) {
    return fail(err, kExitIo, e.kind(), e.what());
  } catch (const ParseError& e) {
    return fail(err, kExitIo, e.kind(), e.what());
  } catch (const ValidationError& e) {
    return fail(err, kExitIo, e.kind(), e.what());
  } catch (const Error& e) {
    return fail(err, kExitConfig, e.kind(), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(err, kExitIo, "io", e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(err, kExitIo, "parse", e.what());
  }
}

}  // namespace msegnn::cli
