// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Mixture-of-experts layer model: token routing with a capacity limit,
// all-to-all exchanges, expert feed-forward compute, and the tensor-parallel
// reduction of expert outputs.

#pragma once

#include <cmath>
#include <vector>

#include "llmpc/breakdown.hpp"
#include "llmpc/common.hpp"
#include "llmpc/network.hpp"
#include "llmpc/roofline.hpp"
#include "llmpc/sysdesc.hpp"

namespace llmpc {

// Shape of one MoE feed-forward block on one device, per microbatch.
// `tokens` is the local token count entering the router.  `ffn_hidden` is
// the full expert width; each expert is sharded across `tp` devices.
// `ep` is the expert-parallel degree: experts live spread over ep groups,
// and tokens cross groups through all-to-all exchanges (skipped when all
// experts are resident, ep == 1).
struct MoEShape {
  double tokens = 0;
  double hidden = 0;
  double ffn_hidden = 0;
  double num_experts = 1;
  double top_k = 1;
  double capacity_factor = 1.0;
  double tp = 1;
  double ep = 1;
  Precision precision = Precision::fp16;
  Phase phase = Phase::training;
};

// Per-expert token budget.  Tokens routed beyond the capacity are dropped by
// the reference systems this models; we price the padded capacity, which is
// also what the exchanges and expert GEMMs see.
inline double expert_capacity(double capacity_factor, double top_k,
                              double tokens, double num_experts) {
  if (num_experts < 1.0) throw ConfigError("num_experts must be >= 1");
  return std::ceil(capacity_factor * top_k * tokens /
                   std::max(num_experts, 1.0));
}

// Bytes each device contributes to one all-to-all direction.
inline double moe_exchange_bytes(const MoEShape& s) {
  const double C =
      expert_capacity(s.capacity_factor, s.top_k, s.tokens, s.num_experts);
  return s.num_experts * C * s.hidden *
         static_cast<double>(bytes_of(s.precision));
}

// Forward cost of the expert block.  Components:
//   moe.gate          router GEMM [tokens x hidden] * [hidden x E] plus the
//                     routing softmax.  (Router flops are bookkeeping, not
//                     model flops; the throughput metric excludes them.)
//   moe.a2a_dispatch  all-to-all pushing tokens to their experts.
//   moe.expert_ffn    both expert GEMMs over the E*C received tokens, with
//                     the activation and bias pointwise work between them.
//   moe.tp_allreduce  reduction of partial expert outputs across the
//                     tensor-parallel group.
//   moe.a2a_combine   all-to-all returning expert outputs.
// `tp_span` is the tensor-parallel group layout (see factor_group);
// `a2a_bw` the configured all-to-all bandwidth for the expert-parallel
// group's level of the hierarchy.
inline TimeBreakdown moe_layer_forward(const MoEShape& s,
                                       const AcceleratorSpec& acc,
                                       const SystemSpec& sys,
                                       const GroupSpan& tp_span,
                                       double a2a_bw) {
  const double be = static_cast<double>(bytes_of(s.precision));
  const double C =
      expert_capacity(s.capacity_factor, s.top_k, s.tokens, s.num_experts);
  const double routed = s.num_experts * C;  // tokens processed locally
  const double ffn_local = s.ffn_hidden / s.tp;

  TimeBreakdown out;

  // Router: skinny GEMM (n = E) plus softmax over expert scores.
  {
    KernelDescriptor g = gemm_descriptor("moe.gate", s.tokens, s.num_experts,
                                         s.hidden, s.precision, acc);
    KernelDescriptor sm =
        pointwise_descriptor("moe.gate.softmax", s.tokens * s.num_experts,
                             kSoftmaxFlopsPerElement, s.precision, acc);
    auto tg = kernel_time(g, acc);
    auto ts = kernel_time(sm, acc);
    out.add("moe.gate", tg.seconds + ts.seconds, tg.bound_by);
  }

  if (s.ep > 1.0) {
    const CommTime t = all_to_all_time(s.num_experts, C, s.hidden, s.precision,
                                       a2a_bw);
    out.add("moe.a2a_dispatch", t.seconds(), "network");
  }

  // Expert feed-forward over the padded capacity.
  {
    KernelDescriptor f1 = gemm_descriptor("moe.expert.ffn1", routed, ffn_local,
                                          s.hidden, s.precision, acc);
    KernelDescriptor f2 = gemm_descriptor("moe.expert.ffn2", routed, s.hidden,
                                          ffn_local, s.precision, acc);
    auto t1 = kernel_time(f1, acc);
    auto t2 = kernel_time(f2, acc);
    // Bias + activation + bias, same inventory as a dense feed-forward.
    KernelDescriptor b1 = pointwise_descriptor(
        "moe.expert.bias1", routed * ffn_local, 1.0, s.precision, acc);
    KernelDescriptor ge = pointwise_descriptor(
        "moe.expert.gelu", routed * ffn_local, kGeluFlopsPerElement,
        s.precision, acc);
    KernelDescriptor b2 = pointwise_descriptor(
        "moe.expert.bias2", routed * s.hidden, 1.0, s.precision, acc);
    double sec = t1.seconds + t2.seconds;
    for (const auto* k : {&b1, &ge, &b2}) sec += kernel_time(*k, acc).seconds;
    out.add("moe.expert_ffn", sec, t1.bound_by);
  }

  if (s.tp > 1.0) {
    const double payload = routed * s.hidden * be;
    const CommTime t = hierarchical_collective_time(CollectiveKind::all_reduce,
                                                    payload, sys, tp_span);
    out.add("moe.tp_allreduce", t.seconds(), "network");
  }

  if (s.ep > 1.0) {
    const CommTime t = all_to_all_time(s.num_experts, C, s.hidden, s.precision,
                                       a2a_bw);
    out.add("moe.a2a_combine", t.seconds(), "network");
  }

  return out;
}

}  // namespace llmpc
