#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "msegnn/tensor.hpp"

namespace msegnn {

// Slow parameters (encoder, explainer) change only in the global update;
// fast parameters (predictor) are also adapted per task.
enum class ParamTag { kSlow, kFast };

const char* tag_name(ParamTag tag);
ParamTag parse_tag(const std::string& name);

struct ParameterEntry {
  std::string name;
  ParamTag tag;
  Tensor tensor;
};

// Named, tagged trainable tensors in insertion order. Copying a ParameterSet
// shares the underlying tensors; use deep_copy() or with_fast_copied() for
// independent storage.
class ParameterSet {
 public:
  using Snapshot = std::vector<std::vector<double>>;

  // Registers a leaf and turns on its gradient. Names must be unique.
  Tensor& add(const std::string& name, ParamTag tag, Tensor value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  const ParameterEntry& entry(const std::string& name) const;
  const std::vector<ParameterEntry>& entries() const { return entries_; }
  std::vector<ParameterEntry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t numel(std::optional<ParamTag> tag = std::nullopt) const;

  Snapshot snapshot() const;
  void restore(const Snapshot& snap);

  ParameterSet deep_copy() const;
  // Fresh storage for fast parameters, shared storage for slow ones.
  ParameterSet with_fast_copied() const;

  void zero_grad();
  // FNV-1a over the raw bytes of the selected parameters' values.
  std::uint64_t hash(std::optional<ParamTag> tag = std::nullopt) const;

 private:
  std::vector<ParameterEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace msegnn
