// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include <llmpc/moe.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace llmpc;

namespace {

AcceleratorSpec make_acc() {
  AcceleratorSpec a;
  a.name = "test-acc";
  a.peak_flops[Precision::fp16] = 312e12;
  a.peak_flops[Precision::fp32] = 19.5e12;
  a.levels = {{"hbm", 40e9, 1.5e12}, {"sram", 20e6, 19e12}};
  a.offchip_bandwidth_Bps = 300e9;
  return a;
}

SystemSpec make_sys(int devices) {
  SystemSpec sys;
  sys.accelerator = make_acc();
  NetworkTopology t;
  t.kind = TopologyKind::switched;
  t.size = devices;
  t.link_bandwidth_Bps = 300e9;
  t.link_latency_s = 0.5e-6;
  t.switch_delay_s = 0.5e-6;
  sys.levels = {t};
  return sys;
}

MoEShape shape(double tokens = 8192, double experts = 16, double top_k = 1,
               double cf = 1.0) {
  MoEShape s;
  s.tokens = tokens;
  s.hidden = 1024;
  s.ffn_hidden = 4096;
  s.num_experts = experts;
  s.top_k = top_k;
  s.capacity_factor = cf;
  s.tp = 1;
  s.ep = 4;
  s.precision = Precision::fp16;
  s.phase = Phase::training;
  return s;
}

}  // namespace

TEST_CASE("expert capacity is the padded per-expert token budget") {
  CHECK(expert_capacity(1.0, 1.0, 8192, 16) == 512.0);
  CHECK(expert_capacity(1.25, 1.0, 8192, 16) == 640.0);
  CHECK(expert_capacity(1.0, 2.0, 8192, 16) == 1024.0);
  // Padding rounds up.
  CHECK(expert_capacity(1.0, 1.0, 100, 16) == 7.0);
  CHECK_THROWS_AS(expert_capacity(1.0, 1.0, 100, 0), ConfigError);
}

TEST_CASE("exchange bytes cover every routed token slot once") {
  auto s = shape();
  const double C = expert_capacity(1.0, 1.0, 8192, 16);
  CHECK(moe_exchange_bytes(s) == Catch::Approx(16.0 * C * 1024.0 * 2.0));
}

TEST_CASE("expert block emits its documented component set") {
  auto sys = make_sys(8);
  auto s = shape();
  GroupSpan tp_span = factor_group(sys, 1, 1);
  auto bd = moe_layer_forward(s, sys.accelerator, sys, tp_span, 25e9);

  CHECK(bd.get("moe.gate") > 0);
  CHECK(bd.get("moe.a2a_dispatch") > 0);
  CHECK(bd.get("moe.expert_ffn") > 0);
  CHECK(bd.get("moe.a2a_combine") > 0);
  CHECK(bd.get("moe.tp_allreduce") == 0);  // tp == 1

  // Dispatch and combine carry the same payload over the same fabric.
  CHECK(bd.get("moe.a2a_dispatch") == bd.get("moe.a2a_combine"));
  // Both equal the closed-form exchange against the measured bandwidth.
  const double C = expert_capacity(1.0, 1.0, 8192, 16);
  CHECK(bd.get("moe.a2a_dispatch") ==
        Catch::Approx(all_to_all_time(16, C, 1024, Precision::fp16, 25e9)
                          .seconds()));
}

TEST_CASE("tensor-parallel experts add the partial-output reduction") {
  auto sys = make_sys(8);
  auto s = shape();
  s.tp = 2;
  GroupSpan tp_span = factor_group(sys, 1, 2);
  auto bd = moe_layer_forward(s, sys.accelerator, sys, tp_span, 25e9);
  CHECK(bd.get("moe.tp_allreduce") > 0);

  // The reduction matches the hierarchical collective on the same payload.
  const double C = expert_capacity(1.0, 1.0, 8192, 16);
  const double payload = 16.0 * C * 1024.0 * 2.0;
  double expect = hierarchical_collective_time(CollectiveKind::all_reduce,
                                               payload, sys, tp_span)
                      .seconds();
  CHECK(bd.get("moe.tp_allreduce") == Catch::Approx(expect));
}

TEST_CASE("single expert group skips the exchanges entirely") {
  auto sys = make_sys(8);
  auto s = shape();
  s.ep = 1;
  GroupSpan tp_span = factor_group(sys, 1, 1);
  auto bd = moe_layer_forward(s, sys.accelerator, sys, tp_span, 25e9);
  CHECK(bd.get("moe.a2a_dispatch") == 0);
  CHECK(bd.get("moe.a2a_combine") == 0);
}

TEST_CASE("capacity factor inflates expert work proportionally") {
  auto sys = make_sys(8);
  auto lean = shape(8192, 16, 1, 1.0);
  auto padded = shape(8192, 16, 1, 1.5);
  GroupSpan tp_span = factor_group(sys, 1, 1);
  auto bd_lean = moe_layer_forward(lean, sys.accelerator, sys, tp_span, 25e9);
  auto bd_padded =
      moe_layer_forward(padded, sys.accelerator, sys, tp_span, 25e9);
  CHECK(bd_padded.get("moe.expert_ffn") > bd_lean.get("moe.expert_ffn"));
  CHECK(bd_padded.get("moe.a2a_dispatch") >
        bd_lean.get("moe.a2a_dispatch"));
  // Router cost is capacity-independent.
  CHECK(bd_padded.get("moe.gate") == bd_lean.get("moe.gate"));
}
