// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Chiplet manufacturing cost model: negative-binomial die yield, the
// core-vs-pad area rule, stacked-memory composition, and package assembly.
// The headline quantity is
//
//   C = ( sum_i C_die,i / Y_die,i + C_assembly ) / Y_assembly
//
// evaluated bottom-up: a stacked part (e.g. an HBM cube) is itself priced by
// the same expression with its own bonding process, then enters the package
// sum as a known-good component.

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmpc/common.hpp"
#include "llmpc/kvconfig.hpp"
#include "llmpc/sysdesc.hpp"

namespace llmpc::cost {

// ---------------------------------------------------------------------------
// Backend library
// ---------------------------------------------------------------------------

struct ProcessEntry {
  double cost_per_mm2 = 0;    // currency / mm² of good wafer area
  double defect_density = 0;  // D0, defects / mm²
  double clustering = 2.0;    // negative-binomial dispersion (alpha)
  double test_cost_per_die = 0;
};

struct AssemblyEntry {
  double material_cost = 0;      // flat currency per package/stack
  double machine_rate = 0;       // currency / s
  double assembly_time = 0;      // s per placement
  double assembly_yield = 1.0;   // (0, 1]
};

struct IoEntry {
  double area_per_lane_mm2 = 0;  // silicon IO-cell area on the die edge
  std::string reach;             // "serial" (off-package) | "parallel" (on-interposer)
};

struct SubstrateEntry {
  double cost_per_mm2 = 0;       // interposer / substrate material
  double packing_factor = 1.1;   // package area over summed die area
};

struct WaferEntry {
  double diameter_mm = 300;
};

struct TechLibrary {
  std::map<std::string, ProcessEntry> process;
  std::map<std::string, AssemblyEntry> assembly;
  std::map<std::string, IoEntry> io;
  std::map<std::string, SubstrateEntry> substrate;
  WaferEntry wafer;

  const ProcessEntry& process_at(const std::string& n) const {
    auto it = process.find(n);
    if (it == process.end())
      throw ConfigError("tech library: unknown process node '" + n + "'");
    return it->second;
  }
  const AssemblyEntry& assembly_at(const std::string& n) const {
    auto it = assembly.find(n);
    if (it == assembly.end())
      throw ConfigError("tech library: unknown assembly process '" + n + "'");
    return it->second;
  }
  const IoEntry& io_at(const std::string& n) const {
    auto it = io.find(n);
    if (it == io.end())
      throw ConfigError("tech library: unknown io type '" + n + "'");
    return it->second;
  }
  const SubstrateEntry& substrate_at(const std::string& n) const {
    auto it = substrate.find(n);
    if (it == substrate.end())
      throw ConfigError("tech library: unknown substrate '" + n + "'");
    return it->second;
  }

  void validate() const {
    for (const auto& [n, p] : process) {
      if (p.cost_per_mm2 <= 0)
        throw ValidationError("process '" + n + "': cost_per_mm2 must be positive");
      if (p.defect_density < 0 || p.clustering <= 0)
        throw ValidationError("process '" + n + "': need D0 >= 0 and clustering > 0");
    }
    for (const auto& [n, a] : assembly) {
      if (a.assembly_yield <= 0 || a.assembly_yield > 1)
        throw ValidationError("assembly '" + n + "': yield must be in (0, 1]");
      if (a.material_cost < 0 || a.machine_rate < 0 || a.assembly_time < 0)
        throw ValidationError("assembly '" + n + "': costs must be nonnegative");
    }
  }
};

inline TechLibrary load_tech_library(const KvTree& kv) {
  TechLibrary lib;
  for (const auto& name : kv.children("process")) {
    ProcessEntry p;
    p.cost_per_mm2 = kv.num_or("process." + name + ".cost_per_mm2", 0);
    p.defect_density = kv.num_or("process." + name + ".defect_density", 0);
    p.clustering = kv.num_or("process." + name + ".clustering", 2.0);
    p.test_cost_per_die = kv.num_or("process." + name + ".test_cost_per_die", 0);
    lib.process[name] = p;
  }
  for (const auto& name : kv.children("assembly")) {
    AssemblyEntry a;
    a.material_cost = kv.num_or("assembly." + name + ".material_cost", 0);
    a.machine_rate = kv.num_or("assembly." + name + ".machine_rate", 0);
    a.assembly_time = kv.num_or("assembly." + name + ".assembly_time", 0);
    a.assembly_yield = kv.num_or("assembly." + name + ".yield", 1.0);
    lib.assembly[name] = a;
  }
  for (const auto& name : kv.children("io")) {
    IoEntry e;
    e.area_per_lane_mm2 = kv.num_or("io." + name + ".area_per_lane_mm2", 0);
    e.reach = kv.str_or("io." + name + ".reach", "serial");
    lib.io[name] = e;
  }
  for (const auto& name : kv.children("substrate")) {
    SubstrateEntry s;
    s.cost_per_mm2 = kv.num_or("substrate." + name + ".cost_per_mm2", 0);
    s.packing_factor = kv.num_or("substrate." + name + ".packing_factor", 1.1);
    lib.substrate[name] = s;
  }
  lib.wafer.diameter_mm = kv.num_or("wafer.diameter_mm", 300);
  lib.validate();
  return lib;
}

// ---------------------------------------------------------------------------
// Chiplets and netlist
// ---------------------------------------------------------------------------

struct IoLink {
  std::string peer;     // other end of the connection (chiplet or "external")
  std::string io_type;  // key into TechLibrary::io
  int lanes = 0;
};

struct ChipletSpec {
  std::string name;
  double core_area_mm2 = 0;
  double io_cell_area_mm2 = 0;  // fixed IO area in addition to per-lane cells
  double pad_area_mm2 = 0;      // signal+power pad ring budget
  std::string process_node;
  std::vector<IoLink> io_links;

  void validate() const {
    if (core_area_mm2 < 0 || io_cell_area_mm2 < 0 || pad_area_mm2 < 0)
      throw ValidationError("chiplet '" + name + "': areas must be nonnegative");
  }
};

// A packaged stack of identical DRAM dies over one base logic die, bonded by
// its own assembly process and tested before package integration.
struct StackSpec {
  std::string name;
  int dram_dies = 8;
  double dram_die_area_mm2 = 0;
  std::string dram_process;
  double base_die_area_mm2 = 0;
  std::string base_process;
  std::string bond_process;  // key into TechLibrary::assembly
};

struct PackageSpec {
  std::string name;
  std::vector<ChipletSpec> chiplets;   // netlist nodes (GPU die, dummies, ...)
  std::vector<StackSpec> stacks;       // memory cubes
  std::string assembly_process;
  std::string substrate;

  void validate(const TechLibrary& lib) const {
    for (const auto& c : chiplets) {
      c.validate();
      lib.process_at(c.process_node);
      for (const auto& l : c.io_links) {
        lib.io_at(l.io_type);
        if (l.peer != "external" && !has_node(l.peer))
          throw ValidationError("chiplet '" + c.name + "': io link peer '" +
                                l.peer + "' is not declared in the netlist");
      }
    }
    lib.assembly_at(assembly_process);
    lib.substrate_at(substrate);
    for (const auto& s : stacks) {
      lib.process_at(s.dram_process);
      lib.process_at(s.base_process);
      lib.assembly_at(s.bond_process);
    }
  }

  bool has_node(const std::string& n) const {
    for (const auto& c : chiplets)
      if (c.name == n) return true;
    for (const auto& s : stacks)
      if (s.name == n) return true;
    return false;
  }
};

// ---------------------------------------------------------------------------
// Yield and area rules
// ---------------------------------------------------------------------------

// Negative-binomial wafer yield; alpha -> infinity recovers the Poisson
// model exp(-A*D0).
inline double die_yield(double area_mm2, double d0, double alpha) {
  if (area_mm2 < 0 || d0 < 0 || alpha <= 0)
    throw ValidationError("die_yield: need area >= 0, D0 >= 0, alpha > 0");
  return std::pow(1.0 + area_mm2 * d0 / alpha, -alpha);
}

// Silicon area the die actually occupies: active logic plus IO cells, unless
// the pad ring is what sets the floorplan.
inline double chiplet_area(const ChipletSpec& c, const TechLibrary& lib) {
  double io_area = c.io_cell_area_mm2;
  for (const auto& l : c.io_links)
    io_area += l.lanes * lib.io_at(l.io_type).area_per_lane_mm2;
  return std::max(c.core_area_mm2 + io_area, c.pad_area_mm2);
}

// Gross die candidates on a round wafer: area term minus the edge loss along
// the circumference.
inline double dies_per_wafer(double die_area_mm2, double wafer_diameter_mm) {
  if (die_area_mm2 <= 0) throw ValidationError("dies_per_wafer: area must be positive");
  const double r = wafer_diameter_mm / 2.0;
  const double n = M_PI * r * r / die_area_mm2 -
                   M_PI * wafer_diameter_mm / std::sqrt(2.0 * die_area_mm2);
  return std::max(n, 0.0);
}

// ---------------------------------------------------------------------------
// Cost evaluation
// ---------------------------------------------------------------------------

struct DieCost {
  std::string name;
  double area_mm2 = 0;
  double raw_cost = 0;    // printed-die cost before yield
  double yield = 1.0;
  double effective_cost = 0;  // raw / yield (+ test), what the package pays
};

struct CostReport {
  std::vector<DieCost> dies;       // package-level components (stacks folded)
  double die_sum = 0;              // sum of effective die costs
  double assembly_cost = 0;        // material + machine time at package level
  double assembly_yield = 1.0;
  double total = 0;                // (die_sum + assembly_cost) / assembly_yield
  double package_area_mm2 = 0;
};

namespace detail {

inline DieCost price_die(const std::string& name, double area,
                         const ProcessEntry& p) {
  DieCost d;
  d.name = name;
  d.area_mm2 = area;
  d.raw_cost = area * p.cost_per_mm2;
  d.yield = die_yield(area, p.defect_density, p.clustering);
  d.effective_cost = d.raw_cost / d.yield + p.test_cost_per_die;
  return d;
}

}  // namespace detail

// Price one memory stack with the bottom-up expression: all dies inside the
// stack pay their own yield, then the bonding step pays its own.
inline DieCost stack_cost(const StackSpec& s, const TechLibrary& lib) {
  const ProcessEntry& dram = lib.process_at(s.dram_process);
  const ProcessEntry& base = lib.process_at(s.base_process);
  const AssemblyEntry& bond = lib.assembly_at(s.bond_process);

  DieCost dd = detail::price_die(s.name + ".dram", s.dram_die_area_mm2, dram);
  DieCost bd = detail::price_die(s.name + ".base", s.base_die_area_mm2, base);
  const double placements = static_cast<double>(s.dram_dies) + 1.0;
  const double asm_cost =
      bond.material_cost + bond.machine_rate * bond.assembly_time * placements;
  DieCost out;
  out.name = s.name;
  out.area_mm2 = std::max(s.dram_die_area_mm2, s.base_die_area_mm2);
  out.raw_cost = s.dram_dies * dd.raw_cost + bd.raw_cost;
  out.yield = bond.assembly_yield;
  out.effective_cost = (s.dram_dies * dd.effective_cost + bd.effective_cost +
                        asm_cost) /
                       bond.assembly_yield;
  return out;
}

inline CostReport system_cost(const PackageSpec& pkg, const TechLibrary& lib) {
  pkg.validate(lib);
  const AssemblyEntry& pasm = lib.assembly_at(pkg.assembly_process);
  const SubstrateEntry& sub = lib.substrate_at(pkg.substrate);

  CostReport rep;
  double footprint = 0;
  for (const auto& c : pkg.chiplets) {
    double area = chiplet_area(c, lib);
    DieCost d = detail::price_die(c.name, area, lib.process_at(c.process_node));
    footprint += area;
    rep.die_sum += d.effective_cost;
    rep.dies.push_back(d);
  }
  for (const auto& s : pkg.stacks) {
    DieCost d = stack_cost(s, lib);
    footprint += d.area_mm2;
    rep.die_sum += d.effective_cost;
    rep.dies.push_back(d);
  }

  rep.package_area_mm2 = footprint * sub.packing_factor;
  const double placements =
      static_cast<double>(pkg.chiplets.size() + pkg.stacks.size());
  rep.assembly_cost = rep.package_area_mm2 * sub.cost_per_mm2 +
                      pasm.material_cost +
                      pasm.machine_rate * pasm.assembly_time * placements;
  rep.assembly_yield = pasm.assembly_yield;
  rep.total = (rep.die_sum + rep.assembly_cost) / rep.assembly_yield;
  return rep;
}

// ---------------------------------------------------------------------------
// SystemSpec -> cost-model frontend
// ---------------------------------------------------------------------------

struct CostOverrides {
  int hbm_stacks = -1;          // -1: keep the preset's count
  double logic_die_scale = 1.0; // scales the accelerator logic-die core area
};

// Generate the chiplet description + netlist for an accelerator package from
// the physical annotations carried by its preset, applying design-space
// overrides (memory stack count, logic die shrink).
inline PackageSpec export_cost_inputs(const SystemSpec& sys,
                                      const CostOverrides& ov = {}) {
  const AcceleratorSpec& acc = sys.accelerator;
  const PhysAnnotations& ph = acc.phys;
  if (!ph.present)
    throw ConfigError("accelerator '" + acc.name +
                      "' carries no physical annotations; cost inputs cannot "
                      "be generated");
  if (ov.logic_die_scale <= 0)
    throw ValidationError("logic_die_scale must be positive");

  PackageSpec pkg;
  pkg.name = acc.name;
  pkg.assembly_process = ph.assembly_process;
  pkg.substrate = ph.substrate;

  const int stacks = ov.hbm_stacks >= 0 ? ov.hbm_stacks : ph.hbm_stacks;

  ChipletSpec gpu;
  gpu.name = "logic";
  gpu.core_area_mm2 = ph.logic_die_area_mm2 * ov.logic_die_scale;
  gpu.pad_area_mm2 = ph.logic_pad_area_mm2;
  gpu.process_node = ph.logic_process;
  if (ph.io_link_lanes > 0 && !ph.io_link_type.empty())
    gpu.io_links.push_back({"external", ph.io_link_type, ph.io_link_lanes});
  if (ph.hbm_phy_lanes_per_stack > 0 && !ph.hbm_phy_type.empty()) {
    for (int i = 0; i < stacks; ++i)
      gpu.io_links.push_back({"hbm" + std::to_string(i), ph.hbm_phy_type,
                              ph.hbm_phy_lanes_per_stack});
  }
  pkg.chiplets.push_back(gpu);

  if (ph.dummy_die_area_mm2 > 0) {
    ChipletSpec dummy;
    dummy.name = "dummy";
    dummy.core_area_mm2 = ph.dummy_die_area_mm2;
    dummy.process_node = ph.hbm_process;  // filler silicon, cheap node
    pkg.chiplets.push_back(dummy);
  }

  for (int i = 0; i < stacks; ++i) {
    StackSpec s;
    s.name = "hbm" + std::to_string(i);
    s.dram_dies = ph.hbm_dram_dies_per_stack;
    s.dram_die_area_mm2 = ph.hbm_dram_die_area_mm2;
    s.dram_process = ph.hbm_process;
    s.base_die_area_mm2 = ph.hbm_logic_die_area_mm2;
    s.base_process = ph.hbm_process;
    s.bond_process = ph.stack_assembly_process;
    pkg.stacks.push_back(s);
  }
  return pkg;
}

inline nlohmann::json to_json(const CostReport& r) {
  nlohmann::json dies = nlohmann::json::array();
  for (const auto& d : r.dies) {
    dies.push_back({{"name", d.name},
                    {"area_mm2", d.area_mm2},
                    {"raw_cost", d.raw_cost},
                    {"yield", d.yield},
                    {"effective_cost", d.effective_cost}});
  }
  return nlohmann::json{{"dies", dies},
                        {"die_sum", r.die_sum},
                        {"assembly_cost", r.assembly_cost},
                        {"assembly_yield", r.assembly_yield},
                        {"package_area_mm2", r.package_area_mm2},
                        {"total", r.total}};
}

}  // namespace llmpc::cost
