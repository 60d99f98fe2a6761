// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Flat key-value configuration tree.
//
// The on-disk format is one `key = value` pair per line with dotted keys
// forming the tree ("system.memory.hbm.capacity_bytes = 40e9"). `#` starts a
// comment, either on its own line or after a value. A line `include = <path>`
// splices another file in place; later keys override earlier ones, which is
// how run configs layer over presets. Include paths resolve relative to the
// including file first, then against the preset directory (see
// `default_preset_dir`).

#pragma once

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "llmpc/common.hpp"

namespace llmpc {

struct KvEntry {
  std::string key;
  std::string value;
  std::string file;  // origin, for error messages
  int line = 0;
};

class KvTree {
 public:
  // Preset directory resolution order: explicit argument, LLMPC_PRESETS
  // environment variable, compiled-in default (the source tree's presets/).
  static std::string default_preset_dir() {
    if (const char* env = std::getenv("LLMPC_PRESETS"); env && *env) return env;
#ifdef LLMPC_DEFAULT_PRESET_DIR
    return LLMPC_DEFAULT_PRESET_DIR;
#else
    return "presets";
#endif
  }

  static KvTree from_file(const std::string& path, const std::string& preset_dir = default_preset_dir()) {
    KvTree t;
    t.preset_dir_ = preset_dir;
    t.load_into(path, 0);
    return t;
  }

  static KvTree from_string(const std::string& text, const std::string& name = "<string>") {
    KvTree t;
    t.preset_dir_ = default_preset_dir();
    t.parse_text(text, name, 0);
    return t;
  }

  void set(const std::string& key, const std::string& value,
           const std::string& file = "<override>", int line = 0) {
    auto it = index_.find(key);
    if (it != index_.end()) {
      entries_[it->second].value = value;
      entries_[it->second].file = file;
      entries_[it->second].line = line;
    } else {
      index_[key] = entries_.size();
      entries_.push_back({key, value, file, line});
    }
  }

  bool has(const std::string& key) const { return index_.count(key) != 0; }

  const std::string& str(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw ConfigError("missing config key '" + key + "'");
    return entries_[it->second].value;
  }

  std::string str_or(const std::string& key, const std::string& def) const {
    auto it = index_.find(key);
    return it == index_.end() ? def : entries_[it->second].value;
  }

  double num(const std::string& key) const { return parse_num(entry(key)); }

  double num_or(const std::string& key, double def) const {
    auto it = index_.find(key);
    return it == index_.end() ? def : parse_num(entries_[it->second]);
  }

  long long integer(const std::string& key) const {
    double v = num(key);
    long long n = static_cast<long long>(v);
    if (static_cast<double>(n) != v)
      throw ConfigError(where(key) + ": expected integer for '" + key + "', got '" + str(key) + "'");
    return n;
  }

  long long integer_or(const std::string& key, long long def) const {
    return has(key) ? integer(key) : def;
  }

  bool flag_or(const std::string& key, bool def) const {
    auto it = index_.find(key);
    if (it == index_.end()) return def;
    const std::string& v = entries_[it->second].value;
    if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "off" || v == "0" || v == "no") return false;
    throw ConfigError(where(key) + ": expected boolean for '" + key + "', got '" + v + "'");
  }

  // Unique next path segments under `prefix.`, in first-appearance order.
  // children("system.network") -> {"0", "1", ...}.
  std::vector<std::string> children(const std::string& prefix) const {
    std::vector<std::string> out;
    std::unordered_map<std::string, bool> seen;
    const std::string p = prefix + ".";
    for (const auto& e : entries_) {
      if (e.key.rfind(p, 0) != 0) continue;
      std::string rest = e.key.substr(p.size());
      std::string seg = rest.substr(0, rest.find('.'));
      if (!seen.count(seg)) {
        seen[seg] = true;
        out.push_back(seg);
      }
    }
    return out;
  }

  std::string where(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return "<unknown>";
    const KvEntry& e = entries_[it->second];
    return e.file + ":" + std::to_string(e.line);
  }

  const std::vector<KvEntry>& entries() const { return entries_; }

  // Canonical flat rendering: sorted keys, one per line. Used for config
  // fingerprints so that key order in the file does not change identity.
  std::string canonical() const {
    std::vector<std::string> lines;
    lines.reserve(entries_.size());
    for (const auto& e : entries_) lines.push_back(e.key + "=" + e.value);
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const auto& l : lines) {
      out += l;
      out += '\n';
    }
    return out;
  }

  std::string fingerprint() const { return hex64(fnv1a(canonical())); }

 private:
  const KvEntry& entry(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw ConfigError("missing config key '" + key + "'");
    return entries_[it->second];
  }

  static double parse_num(const KvEntry& e) {
    const char* s = e.value.c_str();
    char* end = nullptr;
    double v = std::strtod(s, &end);
    if (end == s || *end != '\0')
      throw ConfigError(e.file + ":" + std::to_string(e.line) + ": expected number for '" +
                        e.key + "', got '" + e.value + "'");
    return v;
  }

  static std::string dir_of(const std::string& path) {
    auto pos = path.find_last_of('/');
    return pos == std::string::npos ? std::string(".") : path.substr(0, pos);
  }

  void load_into(const std::string& path, int depth) {
    if (depth > 16) throw ConfigError("include depth limit exceeded at '" + path + "'");
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    parse_text(text, path, depth);
  }

  void parse_text(const std::string& text, const std::string& name, int depth) {
    int lineno = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
      size_t nl = text.find('\n', pos);
      std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
      pos = (nl == std::string::npos) ? text.size() + 1 : nl + 1;
      ++lineno;

      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      line = trim(line);
      if (line.empty()) continue;

      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(name + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError(name + ":" + std::to_string(lineno) + ": empty key");

      if (key == "include") {
        load_into(resolve_include(value, name), depth + 1);
        continue;
      }
      set(key, value, name, lineno);
    }
  }

  std::string resolve_include(const std::string& rel, const std::string& from) const {
    auto exists = [](const std::string& p) { return std::ifstream(p).good(); };
    if (!rel.empty() && rel.front() == '/') {
      if (exists(rel)) return rel;
      throw ConfigError("include '" + rel + "' not found");
    }
    std::string local = dir_of(from) + "/" + rel;
    if (exists(local)) return local;
    std::string preset = preset_dir_ + "/" + rel;
    if (exists(preset)) return preset;
    throw ConfigError("include '" + rel + "' not found (tried '" + local + "' and '" + preset + "')");
  }

  static std::string trim(std::string s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
  }

  std::vector<KvEntry> entries_;
  std::unordered_map<std::string, size_t> index_;
  std::string preset_dir_;
};

}  // namespace llmpc
