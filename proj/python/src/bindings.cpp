#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <sstream>

#include "cli.hpp"
#include "msegnn/checkpoint.hpp"
#include "msegnn/dataset_io.hpp"
#include "msegnn/error.hpp"
#include "msegnn/evalkit.hpp"
#include "msegnn/metatrain.hpp"
#include "msegnn/synthetic.hpp"

namespace py = pybind11;
using namespace msegnn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  const auto v = t.to_vector();
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Graph make_graph(std::int64_t id, const Array& features, const std::vector<Edge>& edges,
                 int label, std::optional<std::vector<std::uint8_t>> truth_mask) {
  if (features.ndim() != 2) throw ValidationError("features must be a 2-D array [nodes, dim]");
  const auto n = static_cast<std::size_t>(features.shape(0));
  const auto d = static_cast<std::size_t>(features.shape(1));
  std::vector<double> values(features.data(), features.data() + n * d);
  return Graph::from_undirected(id, n, d, std::move(values), edges, label, std::move(truth_mask));
}

// Support graphs as (graph, local label) pairs.
std::vector<LabeledGraph> labeled(const std::vector<std::pair<const Graph*, int>>& support) {
  std::vector<LabeledGraph> out;
  for (const auto& [g, label] : support) out.push_back({g, label});
  return out;
}

py::dict explain_graphs(const MseGnn& model, const std::vector<std::pair<const Graph*, int>>& support,
                 const std::vector<const Graph*>& graphs, std::optional<MetaConfig> adapt) {
  ParameterSet params = model.params().deep_copy();
  const std::vector<LabeledGraph> sup = labeled(support);
  if (adapt) {
    Episode ep;
    ep.support = sup;
    ep.n_way = model.config().n_way;
    ep.k_shot = sup.size() / std::max<std::size_t>(ep.n_way, 1);
    for (std::size_t c = 0; c < ep.n_way; ++c) ep.classes.push_back(static_cast<int>(c));
    params = local_adapt(model, params, ep, *adapt).params;
  }
  NoGradGuard no_grad;
  const TaskInfo ti = model.task_info(params, sup);
  py::list masks;
  std::vector<Tensor> rationales;
  for (const Graph* g : graphs) {
    const RationaleOutput r = model.rationale(params, *g, ti);
    masks.append(to_array(r.mask));
    rationales.push_back(r.rationale);
  }
  py::dict out;
  out["masks"] = masks;
  if (!rationales.empty()) {
    const Tensor logits = model.logits(params, stack_rows(rationales), ti);
    out["logits"] = to_array(logits);
    std::vector<int> pred;
    const auto v = logits.to_vector();
    const std::size_t k = logits.shape()[1];
    for (std::size_t i = 0; i < rationales.size(); ++i) {
      const auto row = v.begin() + static_cast<std::ptrdiff_t>(i * k);
      pred.push_back(static_cast<int>(std::max_element(row, row + static_cast<std::ptrdiff_t>(k)) - row));
    }
    out["predictions"] = pred;
  }
  return out;
}

py::dict report_dict(const std::optional<MetricReport>& r) {
  py::dict d;
  if (!r) return d;
  d["mean"] = r->mean;
  d["std"] = r->std;
  d["n_episodes"] = r->n_episodes;
  d["per_episode"] = r->per_episode;
  return d;
}

std::optional<ParamTag> tag_arg(const std::optional<std::string>& tag) {
  if (!tag) return std::nullopt;
  return parse_tag(*tag);
}

}  // namespace

PYBIND11_MODULE(_msegnn, m) {
  m.doc() = "Few-shot self-explaining GNN core";

  auto base = py::register_exception<Error>(m, "MsegnnError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  py::class_<SyntheticConfig>(m, "SyntheticConfig")
      .def(py::init<>())
      .def_readwrite("feature_dim", &SyntheticConfig::feature_dim)
      .def_readwrite("feature_noise", &SyntheticConfig::feature_noise)
      .def_readwrite("base_min", &SyntheticConfig::base_min)
      .def_readwrite("base_max", &SyntheticConfig::base_max)
      .def_readwrite("ba_attach", &SyntheticConfig::ba_attach)
      .def_readwrite("attach_edges", &SyntheticConfig::attach_edges)
      .def("to_json", &SyntheticConfig::to_json);

  py::class_<Graph>(m, "Graph")
      .def(py::init(&make_graph), py::arg("id"), py::arg("features"), py::arg("edges"),
           py::arg("label"), py::arg("truth_mask") = std::nullopt)
      .def_property_readonly("id", &Graph::id)
      .def_property_readonly("num_nodes", &Graph::num_nodes)
      .def_property_readonly("num_edges", &Graph::num_edges)
      .def_property_readonly("feature_dim", &Graph::feature_dim)
      .def_property_readonly("label", &Graph::label)
      .def_property_readonly("features", [](const Graph& g) { return to_array(g.feature_tensor()); })
      .def_property_readonly("edges", &Graph::undirected_edges)
      .def_property_readonly("truth_mask", [](const Graph& g) { return g.truth_mask(); })
      .def("__eq__", [](const Graph& a, const Graph& b) { return a == b; })
      .def("__repr__", [](const Graph& g) {
        std::ostringstream s;
        s << "Graph(id=" << g.id() << ", nodes=" << g.num_nodes() << ", edges=" << g.num_edges()
          << ", label=" << g.label() << ")";
        return s.str();
      });

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<std::size_t, std::size_t, std::vector<Graph>>(), py::arg("feature_dim"),
           py::arg("num_classes"), py::arg("graphs"))
      .def_property_readonly("feature_dim", &Dataset::feature_dim)
      .def_property_readonly("num_classes", &Dataset::num_classes)
      .def_property_readonly("mean_nodes", &Dataset::mean_nodes)
      .def_property_readonly("mean_edges", &Dataset::mean_edges)
      .def("has_truth_masks", &Dataset::has_truth_masks)
      .def("indices_of_class", &Dataset::indices_of_class)
      .def("__len__", &Dataset::size)
      .def("__getitem__",
           [](const Dataset& d, std::size_t i) -> const Graph& {
             if (i >= d.size()) throw py::index_error();
             return d[i];
           },
           py::return_value_policy::reference_internal)
      .def("__eq__", [](const Dataset& a, const Dataset& b) { return a == b; });

  m.def("generate_synthetic", &generate_synthetic, py::arg("num_classes"),
        py::arg("samples_per_class"), py::arg("seed"), py::arg("config") = SyntheticConfig{});
  m.def("load_dataset", py::overload_cast<const std::filesystem::path&>(&load_dataset));
  m.def("save_dataset",
        py::overload_cast<const Dataset&, const std::filesystem::path&>(&save_dataset));

  py::class_<DatasetSplit>(m, "DatasetSplit")
      .def_readonly("train_classes", &DatasetSplit::train_classes)
      .def_readonly("val_classes", &DatasetSplit::val_classes)
      .def_readonly("test_classes", &DatasetSplit::test_classes);
  m.def("split_classes",
        [](std::size_t num_classes, const std::vector<std::size_t>& counts, std::uint64_t seed) {
          return split_classes(num_classes, counts, seed);
        },
        py::arg("num_classes"), py::arg("counts"), py::arg("seed"));

  m.def("accuracy", [](const std::vector<int>& p, const std::vector<int>& l) {
    return accuracy(p, l);
  });
  m.def("roc_auc", [](const std::vector<double>& s, const std::vector<int>& l) {
    return roc_auc(s, l);
  });

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_property(
          "encoder", [](const ModelConfig& c) { return std::string(encoder_name(c.encoder)); },
          [](ModelConfig& c, const std::string& v) { c.encoder = parse_encoder(v); })
      .def_readwrite("input_dim", &ModelConfig::input_dim)
      .def_readwrite("hidden_dim", &ModelConfig::hidden_dim)
      .def_readwrite("layers", &ModelConfig::layers)
      .def_readwrite("n_way", &ModelConfig::n_way)
      .def_property(
          "transform", [](const ModelConfig& c) { return transform_name(c.transform); },
          [](ModelConfig& c, const std::string& v) { c.transform = parse_transform(v); })
      .def_property(
          "predictor", [](const ModelConfig& c) { return predictor_name(c.predictor); },
          [](ModelConfig& c, const std::string& v) { c.predictor = parse_predictor(v); })
      .def_readwrite("center_task", &ModelConfig::center_task)
      .def("validate", &ModelConfig::validate);

  py::class_<LossWeights>(m, "LossWeights")
      .def(py::init<>())
      .def_readwrite("alpha_r", &LossWeights::alpha_r)
      .def_readwrite("alpha_a", &LossWeights::alpha_a)
      .def_readwrite("alpha_reg", &LossWeights::alpha_reg)
      .def_readwrite("gamma", &LossWeights::gamma)
      .def_readwrite("tau", &LossWeights::tau);

  py::class_<MetaConfig>(m, "MetaConfig")
      .def(py::init<>())
      .def_readwrite("local_lr", &MetaConfig::local_lr)
      .def_readwrite("global_lr", &MetaConfig::global_lr)
      .def_readwrite("local_steps", &MetaConfig::local_steps)
      .def_readwrite("episodes_per_meta_update", &MetaConfig::episodes_per_meta_update)
      .def_readwrite("max_meta_iterations", &MetaConfig::max_meta_iterations)
      .def_readwrite("patience", &MetaConfig::patience)
      .def_readwrite("eval_every", &MetaConfig::eval_every)
      .def_readwrite("val_episodes", &MetaConfig::val_episodes)
      .def_readwrite("n_way", &MetaConfig::n_way)
      .def_readwrite("k_shot", &MetaConfig::k_shot)
      .def_readwrite("query_per_class", &MetaConfig::query_per_class)
      .def_readwrite("seed", &MetaConfig::seed)
      .def_readwrite("local_weights", &MetaConfig::local_weights)
      .def_readwrite("global_weights", &MetaConfig::global_weights)
      .def_property(
          "local_optimizer",
          [](const MetaConfig& c) {
            return std::string(c.local_optimizer == LocalOptimizer::kAdam ? "adam" : "sgd");
          },
          [](MetaConfig& c, const std::string& v) {
            if (v == "adam") c.local_optimizer = LocalOptimizer::kAdam;
            else if (v == "sgd") c.local_optimizer = LocalOptimizer::kSgd;
            else throw ConfigError("local_optimizer must be 'adam' or 'sgd', got '" + v + "'");
          })
      .def("validate", &MetaConfig::validate);

  py::class_<MseGnn>(m, "Model")
      .def(py::init<const ModelConfig&, std::uint64_t>(), py::arg("config"), py::arg("seed"))
      .def_property_readonly("config", &MseGnn::config)
      .def("parameter_names",
           [](const MseGnn& model) {
             std::vector<std::string> names;
             for (const auto& e : model.params().entries()) names.push_back(e.name);
             return names;
           })
      .def("parameter_tag",
           [](const MseGnn& model, const std::string& name) {
             return std::string(tag_name(model.params().entry(name).tag));
           })
      .def("parameter", [](const MseGnn& model, const std::string& name) {
        return to_array(model.params().get(name));
      })
      .def("num_parameters",
           [](const MseGnn& model, std::optional<std::string> tag) {
             return model.params().numel(tag_arg(tag));
           },
           py::arg("tag") = std::nullopt)
      .def("parameter_hash",
           [](const MseGnn& model, std::optional<std::string> tag) {
             return model.params().hash(tag_arg(tag));
           },
           py::arg("tag") = std::nullopt)
      .def("explain", &explain_graphs, py::arg("support"), py::arg("graphs"),
           py::arg("adapt") = std::nullopt,
           "Masks, logits and predictions for `graphs` given (graph, local label) support "
           "pairs; with a MetaConfig the fast parameters are adapted on the support first.")
      .def("save",
           [](const MseGnn& model, const std::filesystem::path& path) {
             save_checkpoint(path, model.config(), model.params());
           })
      .def_static("load", [](const std::filesystem::path& path) {
        Checkpoint ck = load_checkpoint(path);
        MseGnn model(ck.config);
        model.params() = std::move(ck.params);
        return model;
      });

  m.def(
      "meta_train",
      [](MseGnn& model, const Dataset& dataset, const DatasetSplit& split,
         const MetaConfig& config, bool keep_best) {
        MetaTrainResult r;
        {
          py::gil_scoped_release release;
          r = meta_train(model, dataset, split, config);
        }
        if (keep_best) model.params() = r.best;
        py::dict out;
        out["episodes_run"] = r.episodes_run;
        out["best_episode"] = r.best_episode;
        out["best_val_accuracy"] = r.best_val_accuracy;
        out["last_val_accuracy"] = r.last_val_accuracy;
        out["local_adapt_calls"] = r.local_adapt_calls;
        out["slow_hash_violations"] = r.slow_hash_violations;
        out["stop_reason"] = r.stop_reason;
        py::list log;
        for (const auto& rec : r.log) {
          py::dict d;
          d["episode_idx"] = rec.episode_idx;
          d["support_loss"] = rec.support_loss;
          d["query_loss"] = rec.query_loss;
          d["val_accuracy"] = rec.val_accuracy;
          log.append(d);
        }
        out["log"] = log;
        return out;
      },
      py::arg("model"), py::arg("dataset"), py::arg("split"), py::arg("config"),
      py::arg("keep_best") = true);

  m.def(
      "test_protocol",
      [](const MseGnn& model, const Dataset& dataset, const std::vector<int>& classes,
         const MetaConfig& config, std::size_t episodes, std::uint64_t seed) {
        TestSummary s;
        {
          py::gil_scoped_release release;
          s = test_protocol(model, model.params(), dataset, classes, config, episodes, seed);
        }
        py::dict out;
        out["episodes"] = s.episodes;
        out["accuracy"] = report_dict(s.accuracy);
        out["auc"] = report_dict(s.auc);
        out["explanation_auc"] = report_dict(s.explanation_auc);
        out["skipped_graphs"] = s.skipped_graphs;
        return out;
      },
      py::arg("model"), py::arg("dataset"), py::arg("classes"), py::arg("config"),
      py::arg("episodes"), py::arg("seed"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out;
        std::ostringstream err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
