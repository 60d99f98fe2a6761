// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include <llmpc/chipcost.hpp>
#include <llmpc/kvconfig.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace llmpc;
using namespace llmpc::cost;

namespace {

TechLibrary make_lib() {
  TechLibrary lib;
  lib.process["7nm"] = {0.13, 0.001, 2.0, 5.0};
  lib.process["dram"] = {0.07, 0.0005, 2.0, 1.0};
  lib.io["serdes"] = {0.5, "serial"};
  lib.io["hbm-phy"] = {0.15, "parallel"};
  lib.assembly["cowos"] = {30.0, 0.02, 60.0, 0.95};
  lib.assembly["tsv-bond"] = {2.0, 0.01, 30.0, 0.98};
  lib.substrate["interposer"] = {0.08, 1.3};
  return lib;
}

PackageSpec simple_package(double logic_area, int stacks) {
  PackageSpec pkg;
  pkg.name = "pkg";
  pkg.assembly_process = "cowos";
  pkg.substrate = "interposer";
  ChipletSpec logic;
  logic.name = "logic";
  logic.core_area_mm2 = logic_area;
  logic.process_node = "7nm";
  pkg.chiplets.push_back(logic);
  for (int i = 0; i < stacks; ++i) {
    StackSpec s;
    s.name = "hbm" + std::to_string(i);
    s.dram_dies = 8;
    s.dram_die_area_mm2 = 110;
    s.dram_process = "dram";
    s.base_die_area_mm2 = 110;
    s.base_process = "dram";
    s.bond_process = "tsv-bond";
    pkg.stacks.push_back(s);
  }
  return pkg;
}

}  // namespace

TEST_CASE("die yield: negative-binomial form and limits") {
  // Perfect silicon at zero area or zero defects.
  CHECK(die_yield(0, 0.01, 2) == 1.0);
  CHECK(die_yield(800, 0, 2) == 1.0);
  // Closed form at the reference point.
  CHECK(die_yield(826, 0.001, 2) == Catch::Approx(0.5006).margin(1e-3));
  // Large clustering converges to the Poisson model.
  CHECK(die_yield(826, 0.001, 1e6) ==
        Catch::Approx(std::exp(-0.826)).margin(1e-6));
}

TEST_CASE("die yield: monotone in area, defect density and clustering") {
  std::mt19937 rng(202406);
  std::uniform_real_distribution<double> area(1.0, 900.0);
  std::uniform_real_distribution<double> d0(1e-5, 5e-3);
  std::uniform_real_distribution<double> alpha(0.5, 10.0);
  for (int i = 0; i < 500; ++i) {
    double a = area(rng), d = d0(rng), al = alpha(rng);
    double y = die_yield(a, d, al);
    CHECK(y > 0);
    CHECK(y <= 1.0);
    CHECK(die_yield(a * 1.1, d, al) < y);
    CHECK(die_yield(a, d * 1.1, al) < y);
    // More clustering (smaller alpha) concentrates defects on fewer dies:
    // yield improves as alpha falls.
    CHECK(die_yield(a, d, al * 0.5) > y);
  }
}

TEST_CASE("dies per wafer: geometric occupancy with edge loss") {
  double n = dies_per_wafer(100, 300);
  // pi*r^2/A minus the perimeter correction.
  CHECK(n == Catch::Approx(M_PI * 150.0 * 150.0 / 100.0 -
                           M_PI * 300.0 / std::sqrt(200.0)));
  CHECK(dies_per_wafer(50, 300) > n);
  // A die larger than the wafer yields nothing, never a negative count.
  CHECK(dies_per_wafer(1e6, 300) == 0.0);
}

TEST_CASE("package cost identity on a minimal library") {
  // One 100 mm^2 die, perfect yield, bare-bones assembly: every term is
  // checkable by hand.
  TechLibrary lib;
  lib.process["p"] = {1.0, 0.0, 2.0, 0.0};
  lib.assembly["a"] = {5.0, 0.0, 0.0, 1.0};
  lib.substrate["s"] = {0.0, 1.0};
  PackageSpec pkg;
  pkg.name = "unit";
  pkg.assembly_process = "a";
  pkg.substrate = "s";
  ChipletSpec die;
  die.name = "d";
  die.core_area_mm2 = 100;
  die.process_node = "p";
  pkg.chiplets.push_back(die);

  auto rep = system_cost(pkg, lib);
  CHECK(rep.die_sum == 100.0);
  CHECK(rep.assembly_cost == 5.0);
  CHECK(rep.total == 105.0);
  CHECK(rep.package_area_mm2 == 100.0);

  // Halving die yield exactly doubles the die term.
  lib.process["p"].defect_density = 1.0;  // y = (1 + 100/2)^-2
  double y = die_yield(100, 1.0, 2.0);
  auto rep2 = system_cost(pkg, lib);
  CHECK(rep2.die_sum == Catch::Approx(100.0 / y));

  // Imperfect package assembly divides the whole bill.
  lib.process["p"].defect_density = 0.0;
  lib.assembly["a"].assembly_yield = 0.5;
  auto rep3 = system_cost(pkg, lib);
  CHECK(rep3.total == Catch::Approx(2.0 * 105.0));
}

TEST_CASE("splitting a die wins exactly when defects are present") {
  // Same total silicon, same process: two dies pay yield on half the area
  // each, which beats one monolithic die whenever D0 > 0.
  TechLibrary lib;
  lib.process["p"] = {1.0, 0.002, 2.0, 0.0};
  lib.assembly["a"] = {0.0, 0.0, 0.0, 1.0};
  lib.substrate["s"] = {0.0, 1.0};

  auto cost_of = [&](std::vector<double> areas) {
    PackageSpec pkg;
    pkg.name = "pkg";
    pkg.assembly_process = "a";
    pkg.substrate = "s";
    int i = 0;
    for (double a : areas) {
      ChipletSpec c;
      c.name = "c" + std::to_string(i++);
      c.core_area_mm2 = a;
      c.process_node = "p";
      pkg.chiplets.push_back(c);
    }
    return system_cost(pkg, lib).total;
  };

  CHECK(cost_of({400, 400}) < cost_of({800}));
  // With perfect silicon the split buys nothing.
  lib.process["p"].defect_density = 0.0;
  CHECK(cost_of({400, 400}) == Catch::Approx(cost_of({800})));
}

TEST_CASE("stack cost: every die pays its yield, the bond pays its own") {
  auto lib = make_lib();
  StackSpec s;
  s.name = "hbm0";
  s.dram_dies = 8;
  s.dram_die_area_mm2 = 110;
  s.dram_process = "dram";
  s.base_die_area_mm2 = 110;
  s.base_process = "dram";
  s.bond_process = "tsv-bond";
  DieCost d = stack_cost(s, lib);

  const ProcessEntry& dram = lib.process.at("dram");
  double die_eff = (110.0 * dram.cost_per_mm2) /
                       die_yield(110, dram.defect_density, dram.clustering) +
                   dram.test_cost_per_die;
  double asm_cost = 2.0 + 0.01 * 30.0 * 9.0;  // material + rate*time*(8+1)
  CHECK(d.effective_cost ==
        Catch::Approx((9.0 * die_eff + asm_cost) / 0.98));
}

TEST_CASE("cost grows monotonically with memory stacks and die area") {
  auto lib = make_lib();
  double prev = 0;
  for (int stacks : {2, 4, 6, 8}) {
    double c = system_cost(simple_package(826, stacks), lib).total;
    CHECK(c > prev);
    prev = c;
  }
  CHECK(system_cost(simple_package(900, 4), lib).total >
        system_cost(simple_package(826, 4), lib).total);
}

TEST_CASE("io lanes add silicon area before yield") {
  auto lib = make_lib();
  ChipletSpec c;
  c.name = "c";
  c.core_area_mm2 = 100;
  c.process_node = "7nm";
  CHECK(chiplet_area(c, lib) == 100.0);
  c.io_links.push_back({"external", "serdes", 12});
  CHECK(chiplet_area(c, lib) == Catch::Approx(100.0 + 12 * 0.5));
  // The pad ring is a floor on the die outline.
  c.pad_area_mm2 = 200;
  CHECK(chiplet_area(c, lib) == 200.0);
}

TEST_CASE("package description derives from accelerator annotations") {
  SystemSpec sys;
  sys.accelerator.name = "acc";
  sys.accelerator.peak_flops[Precision::fp16] = 1e12;
  sys.accelerator.levels = {{"hbm", 40e9, 1e12}, {"sram", 1e6, 2e12}};
  sys.accelerator.offchip_bandwidth_Bps = 300e9;
  NetworkTopology t;
  t.kind = TopologyKind::ring;
  t.size = 2;
  t.link_bandwidth_Bps = 150e9;
  sys.levels = {t};

  // No annotations: cost inputs cannot exist.
  CHECK_THROWS_AS(export_cost_inputs(sys), ConfigError);

  auto& ph = sys.accelerator.phys;
  ph.present = true;
  ph.logic_die_area_mm2 = 826;
  ph.logic_process = "7nm";
  ph.logic_pad_area_mm2 = 120;
  ph.hbm_stacks = 5;
  ph.hbm_dram_dies_per_stack = 8;
  ph.hbm_dram_die_area_mm2 = 110;
  ph.hbm_logic_die_area_mm2 = 110;
  ph.hbm_process = "dram";
  ph.dummy_die_area_mm2 = 92;
  ph.io_link_type = "serdes";
  ph.io_link_lanes = 12;
  ph.hbm_phy_type = "hbm-phy";
  ph.hbm_phy_lanes_per_stack = 8;
  ph.assembly_process = "cowos";
  ph.stack_assembly_process = "tsv-bond";
  ph.substrate = "interposer";

  PackageSpec pkg = export_cost_inputs(sys);
  REQUIRE(pkg.chiplets.size() == 2);  // logic + dummy
  CHECK(pkg.chiplets[0].name == "logic");
  CHECK(pkg.chiplets[1].name == "dummy");
  CHECK(pkg.stacks.size() == 5);
  // One PHY link per stack plus the external serdes.
  CHECK(pkg.chiplets[0].io_links.size() == 6);

  // Overrides reshape the design space without touching the preset.
  CostOverrides ov;
  ov.hbm_stacks = 8;
  ov.logic_die_scale = 0.5;
  PackageSpec wide = export_cost_inputs(sys, ov);
  CHECK(wide.stacks.size() == 8);
  CHECK(wide.chiplets[0].core_area_mm2 == Catch::Approx(413.0));
  CHECK(wide.chiplets[0].io_links.size() == 9);  // PHYs track the stacks

  auto lib = make_lib();
  CHECK(system_cost(wide, lib).total > 0);

  // Stripping the memory strips its PHY links too.
  ov.hbm_stacks = 0;
  ov.logic_die_scale = 1.0;
  PackageSpec bare = export_cost_inputs(sys, ov);
  CHECK(bare.stacks.empty());
  CHECK(bare.chiplets[0].io_links.size() == 1);  // serdes only
}

TEST_CASE("tech library loads and validates from the flat dialect") {
  KvTree kv = KvTree::from_string(
      "process.7nm.cost_per_mm2 = 0.13\n"
      "process.7nm.defect_density = 0.001\n"
      "process.7nm.clustering = 2\n"
      "process.7nm.test_cost_per_die = 5\n"
      "io.serdes.area_per_lane_mm2 = 0.5\n"
      "io.serdes.reach = serial\n"
      "assembly.cowos.material_cost = 30\n"
      "assembly.cowos.machine_rate = 0.02\n"
      "assembly.cowos.assembly_time = 60\n"
      "assembly.cowos.yield = 0.95\n"
      "substrate.interposer.cost_per_mm2 = 0.08\n"
      "substrate.interposer.packing_factor = 1.3\n"
      "wafer.diameter_mm = 300\n");
  TechLibrary lib = load_tech_library(kv);
  CHECK(lib.process.at("7nm").cost_per_mm2 == 0.13);
  CHECK(lib.process.at("7nm").test_cost_per_die == 5.0);
  CHECK(lib.io.at("serdes").reach == "serial");
  CHECK(lib.assembly.at("cowos").assembly_yield == 0.95);
  CHECK(lib.substrate.at("interposer").packing_factor == 1.3);

  // Unknown references are caught at package validation.
  PackageSpec pkg = simple_package(826, 1);
  pkg.substrate = "organic";  // not in the library
  CHECK_THROWS_AS(system_cost(pkg, lib), ConfigError);
}
