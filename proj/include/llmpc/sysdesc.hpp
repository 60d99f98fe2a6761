// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// System description: accelerator compute/memory hierarchy and the network
// hierarchy connecting devices. Loaded from key-value config files, validated
// once, then treated as immutable by everything downstream.

#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmpc/common.hpp"
#include "llmpc/kvconfig.hpp"

namespace llmpc {

using json = nlohmann::json;

// One level of the on-device memory hierarchy. Levels are kept ordered from
// outermost (HBM-like) to innermost (SRAM-like); capacity must strictly
// shrink and bandwidth strictly grow on the way in.
struct MemoryLevel {
  std::string name;
  double capacity_bytes = 0;
  double bandwidth_Bps = 0;

  bool operator==(const MemoryLevel&) const = default;
};

// Physical packaging annotations carried by accelerator presets; consumed by
// the cost module only. `present` is false when a preset has no annotations.
struct PhysAnnotations {
  bool present = false;
  double logic_die_area_mm2 = 0;
  std::string logic_process;
  double logic_pad_area_mm2 = 0;
  int hbm_stacks = 0;
  int hbm_dram_dies_per_stack = 8;
  double hbm_dram_die_area_mm2 = 0;
  double hbm_logic_die_area_mm2 = 0;
  std::string hbm_process;
  double dummy_die_area_mm2 = 0;
  std::string io_link_type;   // serial off-package links (device-to-device)
  int io_link_lanes = 0;
  std::string hbm_phy_type;   // parallel on-package PHY, per stack
  int hbm_phy_lanes_per_stack = 0;
  std::string assembly_process;
  std::string stack_assembly_process;
  std::string substrate;

  bool operator==(const PhysAnnotations&) const = default;
};

struct AcceleratorSpec {
  std::string name;
  std::map<Precision, double> peak_flops;  // flop/s per supported precision
  std::vector<MemoryLevel> levels;         // outermost first
  double offchip_bandwidth_Bps = 0;        // aggregate per-direction, per device
  PhysAnnotations phys;

  bool operator==(const AcceleratorSpec&) const = default;

  double peak(Precision p) const {
    auto it = peak_flops.find(p);
    if (it == peak_flops.end())
      throw ValidationError("accelerator '" + name + "' has no peak_flops entry for " +
                            std::string(to_string(p)));
    return it->second;
  }

  const MemoryLevel& outermost() const {
    if (levels.empty()) throw ValidationError("accelerator '" + name + "' has no memory levels");
    return levels.front();
  }

  const MemoryLevel& innermost() const {
    if (levels.empty()) throw ValidationError("accelerator '" + name + "' has no memory levels");
    return levels.back();
  }

  const MemoryLevel* find_level(const std::string& n) const {
    for (const auto& l : levels)
      if (l.name == n) return &l;
    return nullptr;
  }

  void validate() const {
    if (peak_flops.empty())
      throw ValidationError("accelerator '" + name + "': no peak_flops entries");
    for (auto [p, v] : peak_flops)
      if (v <= 0)
        throw ValidationError("accelerator '" + name + "': peak_flops." + to_string(p) +
                              " must be positive");
    if (levels.size() < 2)
      throw ValidationError("accelerator '" + name +
                            "': need at least two memory levels (HBM-like and SRAM-like)");
    for (const auto& l : levels) {
      if (l.capacity_bytes <= 0 || l.bandwidth_Bps <= 0)
        throw ValidationError("accelerator '" + name + "': memory level '" + l.name +
                              "' needs positive capacity and bandwidth");
    }
    for (size_t i = 1; i < levels.size(); ++i) {
      if (!(levels[i].capacity_bytes < levels[i - 1].capacity_bytes))
        throw ValidationError("accelerator '" + name + "': capacity must strictly decrease inward ('" +
                              levels[i - 1].name + "' -> '" + levels[i].name + "')");
      if (!(levels[i].bandwidth_Bps > levels[i - 1].bandwidth_Bps))
        throw ValidationError("accelerator '" + name + "': bandwidth must strictly increase inward ('" +
                              levels[i - 1].name + "' -> '" + levels[i].name + "')");
    }
  }
};

enum class TopologyKind { ring, switched, fully_connected, mesh2d };

inline const char* to_string(TopologyKind k) {
  switch (k) {
    case TopologyKind::ring: return "ring";
    case TopologyKind::switched: return "switch";
    case TopologyKind::fully_connected: return "fully_connected";
    case TopologyKind::mesh2d: return "mesh2d";
  }
  return "?";
}

inline TopologyKind topology_from_string(const std::string& s) {
  if (s == "ring") return TopologyKind::ring;
  if (s == "switch") return TopologyKind::switched;
  if (s == "fully_connected") return TopologyKind::fully_connected;
  if (s == "mesh2d") return TopologyKind::mesh2d;
  throw ValidationError("unknown topology kind '" + s + "'");
}

// Physical links per device a topology requires. The mesh value is the
// interior-uniform count; edge devices of an open mesh have fewer, but the
// bandwidth budget is provisioned for the interior.
inline int links_per_device(TopologyKind k, int size, int mesh_rows = 0, int mesh_cols = 0) {
  switch (k) {
    case TopologyKind::ring: return size >= 2 ? 2 : 0;
    case TopologyKind::fully_connected: return size - 1;
    case TopologyKind::mesh2d:
      (void)mesh_rows; (void)mesh_cols;
      return 4;
    case TopologyKind::switched: return 1;  // one uplink into the switch
  }
  return 0;
}

// Hops a single transfer crosses: direct links are one hop, a switch adds an
// intermediate hop (ingress + egress).
inline int hops_per_transfer(TopologyKind k) {
  return k == TopologyKind::switched ? 2 : 1;
}

// Splitting a fixed per-device off-chip bandwidth budget across the links a
// topology needs. Per-link bandwidth = budget / link count.
inline double derive_link_bandwidth(double offchip_Bps, TopologyKind k, int size,
                                    int mesh_rows = 0, int mesh_cols = 0) {
  if (offchip_Bps <= 0) throw ValidationError("offchip bandwidth must be positive");
  int n = links_per_device(k, size, mesh_rows, mesh_cols);
  if (n <= 0) throw ValidationError("topology of size " + std::to_string(size) + " has no links");
  return offchip_Bps / n;
}

struct NetworkTopology {
  TopologyKind kind = TopologyKind::ring;
  int size = 1;                    // devices (or groups) connected at this level
  double link_bandwidth_Bps = 0;   // per link, per direction
  double link_latency_s = 0;
  double switch_delay_s = 0;       // per traversal; only meaningful for switches
  int mesh_rows = 0, mesh_cols = 0;
  double a2a_bandwidth_Bps = 0;    // measured all-to-all bandwidth; 0 = use link bw

  bool operator==(const NetworkTopology&) const = default;

  double a2a_bandwidth() const {
    return a2a_bandwidth_Bps > 0 ? a2a_bandwidth_Bps : link_bandwidth_Bps;
  }

  void validate() const {
    if (size < 1) throw ValidationError("network level size must be >= 1");
    if (link_bandwidth_Bps <= 0) throw ValidationError("link bandwidth must be positive");
    if (link_latency_s < 0 || switch_delay_s < 0)
      throw ValidationError("latencies must be non-negative");
    if (kind == TopologyKind::mesh2d) {
      if (mesh_rows < 1 || mesh_cols < 1 || mesh_rows * mesh_cols != size)
        throw ValidationError("mesh2d requires mesh_rows*mesh_cols == size (got " +
                              std::to_string(mesh_rows) + "x" + std::to_string(mesh_cols) +
                              " for size " + std::to_string(size) + ")");
    }
    if (kind == TopologyKind::fully_connected && size < 2)
      throw ValidationError("fully_connected level needs size >= 2");
  }
};

// Full system: one accelerator type plus a hierarchy of network levels,
// innermost (intra-node) first. total_devices is the product of level sizes.
struct SystemSpec {
  AcceleratorSpec accelerator;
  std::vector<NetworkTopology> levels;

  bool operator==(const SystemSpec&) const = default;

  long long total_devices() const {
    long long n = 1;
    for (const auto& l : levels) n *= l.size;
    return n;
  }

  void validate() const {
    accelerator.validate();
    if (levels.empty())
      throw ValidationError("system needs at least one network level (size 1 is fine)");
    for (const auto& l : levels) l.validate();
  }
};

// ---------------------------------------------------------------------------
// JSON serialization (normalized spec dump).

inline void to_json(json& j, const MemoryLevel& m) {
  j = json{{"name", m.name}, {"capacity_bytes", m.capacity_bytes}, {"bandwidth_Bps", m.bandwidth_Bps}};
}
inline void from_json(const json& j, MemoryLevel& m) {
  j.at("name").get_to(m.name);
  j.at("capacity_bytes").get_to(m.capacity_bytes);
  j.at("bandwidth_Bps").get_to(m.bandwidth_Bps);
}

inline void to_json(json& j, const PhysAnnotations& p) {
  j = json{{"present", p.present}};
  if (!p.present) return;
  j["logic_die_area_mm2"] = p.logic_die_area_mm2;
  j["logic_process"] = p.logic_process;
  j["logic_pad_area_mm2"] = p.logic_pad_area_mm2;
  j["hbm_stacks"] = p.hbm_stacks;
  j["hbm_dram_dies_per_stack"] = p.hbm_dram_dies_per_stack;
  j["hbm_dram_die_area_mm2"] = p.hbm_dram_die_area_mm2;
  j["hbm_logic_die_area_mm2"] = p.hbm_logic_die_area_mm2;
  j["hbm_process"] = p.hbm_process;
  j["dummy_die_area_mm2"] = p.dummy_die_area_mm2;
  j["io_link_type"] = p.io_link_type;
  j["io_link_lanes"] = p.io_link_lanes;
  j["hbm_phy_type"] = p.hbm_phy_type;
  j["hbm_phy_lanes_per_stack"] = p.hbm_phy_lanes_per_stack;
  j["assembly_process"] = p.assembly_process;
  j["stack_assembly_process"] = p.stack_assembly_process;
  j["substrate"] = p.substrate;
}
inline void from_json(const json& j, PhysAnnotations& p) {
  p = PhysAnnotations{};
  j.at("present").get_to(p.present);
  if (!p.present) return;
  j.at("logic_die_area_mm2").get_to(p.logic_die_area_mm2);
  j.at("logic_process").get_to(p.logic_process);
  j.at("logic_pad_area_mm2").get_to(p.logic_pad_area_mm2);
  j.at("hbm_stacks").get_to(p.hbm_stacks);
  j.at("hbm_dram_dies_per_stack").get_to(p.hbm_dram_dies_per_stack);
  j.at("hbm_dram_die_area_mm2").get_to(p.hbm_dram_die_area_mm2);
  j.at("hbm_logic_die_area_mm2").get_to(p.hbm_logic_die_area_mm2);
  j.at("hbm_process").get_to(p.hbm_process);
  j.at("dummy_die_area_mm2").get_to(p.dummy_die_area_mm2);
  j.at("io_link_type").get_to(p.io_link_type);
  j.at("io_link_lanes").get_to(p.io_link_lanes);
  j.at("hbm_phy_type").get_to(p.hbm_phy_type);
  j.at("hbm_phy_lanes_per_stack").get_to(p.hbm_phy_lanes_per_stack);
  j.at("assembly_process").get_to(p.assembly_process);
  j.at("stack_assembly_process").get_to(p.stack_assembly_process);
  j.at("substrate").get_to(p.substrate);
}

inline void to_json(json& j, const AcceleratorSpec& a) {
  json pf = json::object();
  for (auto [p, v] : a.peak_flops) pf[to_string(p)] = v;
  j = json{{"name", a.name},
           {"peak_flops", pf},
           {"memory_levels", a.levels},
           {"offchip_bandwidth_Bps", a.offchip_bandwidth_Bps},
           {"phys", a.phys}};
}
inline void from_json(const json& j, AcceleratorSpec& a) {
  a = AcceleratorSpec{};
  j.at("name").get_to(a.name);
  for (auto& [k, v] : j.at("peak_flops").items())
    a.peak_flops[precision_from_string(k)] = v.get<double>();
  j.at("memory_levels").get_to(a.levels);
  j.at("offchip_bandwidth_Bps").get_to(a.offchip_bandwidth_Bps);
  j.at("phys").get_to(a.phys);
}

inline void to_json(json& j, const NetworkTopology& t) {
  j = json{{"kind", to_string(t.kind)},
           {"size", t.size},
           {"link_bandwidth_Bps", t.link_bandwidth_Bps},
           {"link_latency_s", t.link_latency_s},
           {"switch_delay_s", t.switch_delay_s},
           {"mesh_rows", t.mesh_rows},
           {"mesh_cols", t.mesh_cols},
           {"a2a_bandwidth_Bps", t.a2a_bandwidth_Bps}};
}
inline void from_json(const json& j, NetworkTopology& t) {
  t.kind = topology_from_string(j.at("kind").get<std::string>());
  j.at("size").get_to(t.size);
  j.at("link_bandwidth_Bps").get_to(t.link_bandwidth_Bps);
  j.at("link_latency_s").get_to(t.link_latency_s);
  j.at("switch_delay_s").get_to(t.switch_delay_s);
  j.at("mesh_rows").get_to(t.mesh_rows);
  j.at("mesh_cols").get_to(t.mesh_cols);
  j.at("a2a_bandwidth_Bps").get_to(t.a2a_bandwidth_Bps);
}

inline void to_json(json& j, const SystemSpec& s) {
  j = json{{"accelerator", s.accelerator}, {"network_levels", s.levels}};
}
inline void from_json(const json& j, SystemSpec& s) {
  j.at("accelerator").get_to(s.accelerator);
  j.at("network_levels").get_to(s.levels);
}

// ---------------------------------------------------------------------------
// Config-file loading.

inline AcceleratorSpec load_accelerator(const KvTree& kv) {
  AcceleratorSpec a;
  a.name = kv.str_or("system.accelerator.name", "unnamed");
  for (const auto& p : kv.children("system.accelerator.peak_flops"))
    a.peak_flops[precision_from_string(p)] = kv.num("system.accelerator.peak_flops." + p);
  // Memory level order is the order of first appearance in the file,
  // outermost first; validation enforces the capacity/bandwidth ordering.
  for (const auto& lvl : kv.children("system.memory")) {
    MemoryLevel m;
    m.name = lvl;
    m.capacity_bytes = kv.num("system.memory." + lvl + ".capacity_bytes");
    m.bandwidth_Bps = kv.num("system.memory." + lvl + ".bandwidth_Bps");
    a.levels.push_back(m);
  }
  a.offchip_bandwidth_Bps = kv.num_or("system.accelerator.offchip_bandwidth_Bps", 0);

  const std::string pp = "system.accelerator.phys";
  if (!kv.children(pp).empty()) {
    PhysAnnotations& ph = a.phys;
    ph.present = true;
    ph.logic_die_area_mm2 = kv.num_or(pp + ".logic_die_area_mm2", 0);
    ph.logic_process = kv.str_or(pp + ".logic_process", "");
    ph.logic_pad_area_mm2 = kv.num_or(pp + ".logic_pad_area_mm2", 0);
    ph.hbm_stacks = static_cast<int>(kv.integer_or(pp + ".hbm_stacks", 0));
    ph.hbm_dram_dies_per_stack = static_cast<int>(kv.integer_or(pp + ".hbm_dram_dies_per_stack", 8));
    ph.hbm_dram_die_area_mm2 = kv.num_or(pp + ".hbm_dram_die_area_mm2", 0);
    ph.hbm_logic_die_area_mm2 = kv.num_or(pp + ".hbm_logic_die_area_mm2", 0);
    ph.hbm_process = kv.str_or(pp + ".hbm_process", "");
    ph.dummy_die_area_mm2 = kv.num_or(pp + ".dummy_die_area_mm2", 0);
    ph.io_link_type = kv.str_or(pp + ".io_link_type", "");
    ph.io_link_lanes = static_cast<int>(kv.integer_or(pp + ".io_link_lanes", 0));
    ph.hbm_phy_type = kv.str_or(pp + ".hbm_phy_type", "");
    ph.hbm_phy_lanes_per_stack = static_cast<int>(kv.integer_or(pp + ".hbm_phy_lanes_per_stack", 0));
    ph.assembly_process = kv.str_or(pp + ".assembly_process", "");
    ph.stack_assembly_process = kv.str_or(pp + ".stack_assembly_process", "");
    ph.substrate = kv.str_or(pp + ".substrate", "");
  }
  return a;
}

inline SystemSpec load_system(const KvTree& kv) {
  SystemSpec s;
  s.accelerator = load_accelerator(kv);
  for (const auto& idx : kv.children("system.network")) {
    const std::string p = "system.network." + idx;
    NetworkTopology t;
    t.kind = topology_from_string(kv.str(p + ".kind"));
    t.size = static_cast<int>(kv.integer(p + ".size"));
    if (kv.has(p + ".link_bandwidth_Bps")) {
      t.link_bandwidth_Bps = kv.num(p + ".link_bandwidth_Bps");
    } else {
      // No explicit link bandwidth: split the accelerator's off-chip budget
      // across this topology's links.
      t.mesh_rows = static_cast<int>(kv.integer_or(p + ".mesh_rows", 0));
      t.mesh_cols = static_cast<int>(kv.integer_or(p + ".mesh_cols", 0));
      t.link_bandwidth_Bps = derive_link_bandwidth(s.accelerator.offchip_bandwidth_Bps, t.kind,
                                                   t.size, t.mesh_rows, t.mesh_cols);
    }
    t.link_latency_s = kv.num_or(p + ".link_latency_s", 0);
    t.switch_delay_s = kv.num_or(p + ".switch_delay_s", 0);
    t.mesh_rows = static_cast<int>(kv.integer_or(p + ".mesh_rows", t.mesh_rows));
    t.mesh_cols = static_cast<int>(kv.integer_or(p + ".mesh_cols", t.mesh_cols));
    t.a2a_bandwidth_Bps = kv.num_or(p + ".a2a_bandwidth_Bps", 0);
    s.levels.push_back(t);
  }
  s.validate();
  return s;
}

inline SystemSpec load_system_config(const std::string& path,
                                     const std::string& preset_dir = KvTree::default_preset_dir()) {
  return load_system(KvTree::from_file(path, preset_dir));
}

}  // namespace llmpc
