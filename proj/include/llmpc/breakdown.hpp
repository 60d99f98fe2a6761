// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Component-attributed time accounting. A TimeBreakdown's total is always
// the exact sum of its components; callers build totals only by adding
// components, never by writing a separate total field.

#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace llmpc {

struct TimeBreakdown {
  // Insertion-ordered (label, seconds) pairs.
  std::vector<std::pair<std::string, double>> components;
  // Optional per-label boundedness: "compute", a memory level name, or
  // "network" for communication components.
  std::unordered_map<std::string, std::string> bound_tags;
  std::string metadata;  // config fingerprint or free-form note

  void add(const std::string& label, double seconds, const std::string& bound = "") {
    for (auto& [l, s] : components) {
      if (l == label) {
        s += seconds;
        if (!bound.empty()) bound_tags[label] = bound;
        return;
      }
    }
    components.emplace_back(label, seconds);
    if (!bound.empty()) bound_tags[label] = bound;
  }

  double get(const std::string& label) const {
    for (const auto& [l, s] : components)
      if (l == label) return s;
    return 0;
  }

  double total() const {
    double t = 0;
    for (const auto& [l, s] : components) t += s;
    return t;
  }

  // Fold `other` in, scaling every component; labels merge by name.
  void merge_scaled(const TimeBreakdown& other, double scale) {
    for (const auto& [l, s] : other.components) {
      auto it = other.bound_tags.find(l);
      add(l, s * scale, it == other.bound_tags.end() ? "" : it->second);
    }
  }
};

inline void to_json(nlohmann::json& j, const TimeBreakdown& b) {
  nlohmann::json comps = nlohmann::json::object();
  nlohmann::json order = nlohmann::json::array();
  for (const auto& [l, s] : b.components) {
    comps[l] = s;
    order.push_back(l);
  }
  nlohmann::json tags = nlohmann::json::object();
  for (const auto& [l, t] : b.bound_tags) tags[l] = t;
  j = nlohmann::json{{"components", comps},
                     {"component_order", order},
                     {"bound_by", tags},
                     {"total_s", b.total()},
                     {"metadata", b.metadata}};
}

}  // namespace llmpc
