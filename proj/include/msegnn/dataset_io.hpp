#pragma once

#include <filesystem>
#include <iosfwd>

#include "msegnn/graph.hpp"

namespace msegnn {

inline constexpr int kDatasetFormatVersion = 1;

// Line-delimited JSON: a header {format_version, d, num_classes[, generator]}
// followed by one record per graph {id, num_nodes, edges, features, label,
// truth_mask?}. Edges list both directions of every undirected edge.
void save_dataset(const Dataset& dataset, std::ostream& out);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

// Throws ParseError (with line number) on malformed JSON or missing fields
// and ValidationError on structurally inconsistent graphs.
Dataset load_dataset(std::istream& in);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace msegnn
