#include "msegnn/dataset_io.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "msegnn/error.hpp"

namespace msegnn {

using nlohmann::json;

namespace {

json graph_record(const Graph& g) {
  json rec;
  rec["id"] = g.id();
  rec["num_nodes"] = g.num_nodes();
  json edges = json::array();
  for (const auto& [u, v] : g.directed_edges()) edges.push_back({u, v});
  rec["edges"] = std::move(edges);
  json feats = json::array();
  const auto f = g.features();
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    feats.push_back(std::vector<double>(f.begin() + static_cast<std::ptrdiff_t>(v * g.feature_dim()),
                                        f.begin() + static_cast<std::ptrdiff_t>((v + 1) * g.feature_dim())));
  }
  rec["features"] = std::move(feats);
  rec["label"] = g.label();
  if (g.truth_mask()) {
    std::vector<int> mask(g.truth_mask()->begin(), g.truth_mask()->end());
    rec["truth_mask"] = mask;
  }
  return rec;
}

const json& field(const json& obj, const char* name, std::size_t line) {
  auto it = obj.find(name);
  if (it == obj.end()) throw ParseError(line, std::string("missing field '") + name + "'");
  return *it;
}

template <typename T>
T as(const json& value, const char* name, std::size_t line) {
  try {
    return value.get<T>();
  } catch (const json::exception& e) {
    throw ParseError(line, std::string("field '") + name + "': " + e.what());
  }
}

Graph parse_graph(const json& rec, std::size_t d, std::size_t line) {
  if (!rec.is_object()) throw ParseError(line, "record is not an object");
  const auto id = as<std::int64_t>(field(rec, "id", line), "id", line);
  const auto n = as<std::size_t>(field(rec, "num_nodes", line), "num_nodes", line);
  const auto label = as<int>(field(rec, "label", line), "label", line);
  const auto edge_pairs =
      as<std::vector<std::vector<std::size_t>>>(field(rec, "edges", line), "edges", line);
  std::vector<Edge> edges;
  edges.reserve(edge_pairs.size());
  for (const auto& e : edge_pairs) {
    if (e.size() != 2) throw ParseError(line, "edge entries must be [u, v] pairs");
    edges.emplace_back(e[0], e[1]);
  }
  const auto rows =
      as<std::vector<std::vector<double>>>(field(rec, "features", line), "features", line);
  const std::string where = "line " + std::to_string(line) + ": ";
  if (rows.size() != n) {
    throw ValidationError(where + "features have " + std::to_string(rows.size()) +
                          " rows but num_nodes is " + std::to_string(n));
  }
  std::vector<double> features;
  features.reserve(n * d);
  for (const auto& r : rows) {
    if (r.size() != d) {
      throw ValidationError(where + "feature row of width " + std::to_string(r.size()) +
                            " does not match d=" + std::to_string(d));
    }
    features.insert(features.end(), r.begin(), r.end());
  }
  std::optional<std::vector<std::uint8_t>> truth;
  if (auto it = rec.find("truth_mask"); it != rec.end() && !it->is_null()) {
    const auto mask = as<std::vector<int>>(*it, "truth_mask", line);
    truth.emplace();
    for (int x : mask) {
      if (x != 0 && x != 1) throw ValidationError(where + "truth_mask entries must be 0 or 1");
      truth->push_back(static_cast<std::uint8_t>(x));
    }
  }
  try {
    return Graph(id, n, d, std::move(features), edges, label, std::move(truth));
  } catch (const ValidationError& e) {
    throw ValidationError(where + e.what());
  }
}

}  // namespace

void save_dataset(const Dataset& dataset, std::ostream& out) {
  json header;
  header["format_version"] = kDatasetFormatVersion;
  header["d"] = dataset.feature_dim();
  header["num_classes"] = dataset.num_classes();
  if (!dataset.generator_json().empty()) {
    header["generator"] = json::parse(dataset.generator_json());
  }
  out << header.dump() << '\n';
  for (const auto& g : dataset.graphs()) out << graph_record(g).dump() << '\n';
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  save_dataset(dataset, out);
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Dataset load_dataset(std::istream& in) {
  std::string text;
  std::size_t line_no = 0;
  json header;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      header = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed header: ") + e.what());
    }
    break;
  }
  if (header.is_null()) throw ParseError(line_no, "missing header line");
  if (!header.is_object()) throw ParseError(line_no, "header is not an object");
  const std::size_t header_line = line_no;
  const int version = as<int>(field(header, "format_version", header_line), "format_version",
                              header_line);
  if (version != kDatasetFormatVersion) {
    throw ParseError(header_line, "unsupported format_version " + std::to_string(version));
  }
  const auto d = as<std::size_t>(field(header, "d", header_line), "d", header_line);
  const auto num_classes =
      as<std::size_t>(field(header, "num_classes", header_line), "num_classes", header_line);
  std::string generator;
  if (auto it = header.find("generator"); it != header.end()) generator = it->dump();

  std::vector<Graph> graphs;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed record: ") + e.what());
    }
    graphs.push_back(parse_graph(rec, d, line_no));
    if (static_cast<std::size_t>(graphs.back().label()) >= num_classes) {
      throw ValidationError("line " + std::to_string(line_no) + ": label " +
                            std::to_string(graphs.back().label()) + " outside 0.." +
                            std::to_string(num_classes - 1));
    }
  }
  return Dataset(d, num_classes, std::move(graphs), std::move(generator));
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return load_dataset(in);
}

}  // namespace msegnn
