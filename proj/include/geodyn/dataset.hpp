#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "geodyn/errors.hpp"
#include "geodyn/spd_core.hpp"

namespace geodyn {

struct LabeledSequence {
  SpdSequence seq;
  std::uint32_t label = 0;

  friend bool operator==(const LabeledSequence& a, const LabeledSequence& b) {
    return a.label == b.label && a.seq == b.seq;
  }
};

/// Labeled SPD sequences plus a free-form JSON manifest (class names,
/// construction parameters, provenance, seed).
struct LabeledDataset {
  std::vector<LabeledSequence> items;
  nlohmann::json manifest = nlohmann::json::object();

  std::size_t size() const noexcept { return items.size(); }
  bool empty() const noexcept { return items.empty(); }

  Eigen::Index dim() const {
    if (items.empty()) throw DimensionError("dataset: empty");
    return items.front().seq.dim();
  }

  /// Class count: the manifest's class list if present, else max label + 1.
  std::size_t num_classes() const {
    if (manifest.contains("classes") && manifest["classes"].is_array()) return manifest["classes"].size();
    std::uint32_t m = 0;
    for (const auto& it : items) m = std::max(m, it.label);
    return items.empty() ? 0 : static_cast<std::size_t>(m) + 1;
  }

  std::vector<std::uint32_t> labels() const {
    std::vector<std::uint32_t> out;
    out.reserve(items.size());
    for (const auto& it : items) out.push_back(it.label);
    return out;
  }

  /// Checks shared dimension and label range.
  void validate() const {
    const auto q = num_classes();
    for (const auto& it : items) {
      if (it.seq.empty()) throw DimensionError("dataset: empty sequence");
      detail::require_same_dim(it.seq.dim(), items.front().seq.dim(), "dataset");
      if (it.label >= q) throw ParameterError("dataset: label " + std::to_string(it.label) + " out of range");
    }
  }

  LabeledDataset subset(const std::vector<std::size_t>& idx) const {
    LabeledDataset out;
    out.manifest = manifest;
    out.items.reserve(idx.size());
    for (auto i : idx) out.items.push_back(items.at(i));
    return out;
  }

  friend bool operator==(const LabeledDataset& a, const LabeledDataset& b) {
    return a.items == b.items && a.manifest == b.manifest;
  }
};

}  // namespace geodyn
