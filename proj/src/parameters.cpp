#include "msegnn/parameters.hpp"

#include <cstring>

#include "msegnn/error.hpp"

namespace msegnn {

const char* tag_name(ParamTag tag) { return tag == ParamTag::kSlow ? "slow" : "fast"; }

ParamTag parse_tag(const std::string& name) {
  if (name == "slow") return ParamTag::kSlow;
  if (name == "fast") return ParamTag::kFast;
  throw ValidationError("unknown parameter tag '" + name + "'");
}

Tensor& ParameterSet::add(const std::string& name, ParamTag tag, Tensor value) {
  if (contains(name)) throw ConfigError("parameter '" + name + "' registered twice");
  value.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.push_back({name, tag, std::move(value)});
  return entries_.back().tensor;
}

const ParameterEntry& ParameterSet::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

const Tensor& ParameterSet::get(const std::string& name) const { return entry(name).tensor; }

Tensor& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

std::size_t ParameterSet::numel(std::optional<ParamTag> tag) const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (!tag || e.tag == *tag) n += e.tensor.numel();
  return n;
}

ParameterSet::Snapshot ParameterSet::snapshot() const {
  Snapshot snap;
  snap.reserve(entries_.size());
  for (const auto& e : entries_) snap.push_back(e.tensor.to_vector());
  return snap;
}

void ParameterSet::restore(const Snapshot& snap) {
  if (snap.size() != entries_.size()) throw DimensionError("restore: snapshot size mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto dst = entries_[i].tensor.mutable_values();
    if (snap[i].size() != dst.size()) {
      throw DimensionError("restore: snapshot of '" + entries_[i].name + "' has wrong size");
    }
    std::copy(snap[i].begin(), snap[i].end(), dst.begin());
  }
}

ParameterSet ParameterSet::deep_copy() const {
  ParameterSet out;
  for (const auto& e : entries_) out.add(e.name, e.tag, e.tensor.detach());
  return out;
}

ParameterSet ParameterSet::with_fast_copied() const {
  ParameterSet out;
  for (const auto& e : entries_) {
    if (e.tag == ParamTag::kFast) {
      out.add(e.name, e.tag, e.tensor.detach());
    } else {
      out.index_.emplace(e.name, out.entries_.size());
      out.entries_.push_back(e);
    }
  }
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::uint64_t ParameterSet::hash(std::optional<ParamTag> tag) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& e : entries_) {
    if (tag && e.tag != *tag) continue;
    for (char c : e.name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    for (double v : e.tensor.values()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace msegnn
