// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Analytical cost models for the attention block: the standard three-pass
// implementation that materializes the score matrix in off-chip memory, and
// the tiled (flash) implementation that keeps it resident in on-chip SRAM.
//
// Both models price a whole batch of independent head instances at once.
// Head counts are *local* (post tensor-parallel sharding); callers shard
// before building the shape.

#pragma once

#include <cmath>
#include <string>

#include "llmpc/breakdown.hpp"
#include "llmpc/common.hpp"
#include "llmpc/roofline.hpp"
#include "llmpc/sysdesc.hpp"

namespace llmpc {

// Shape of one attention invocation on one device.
//
// `batch` counts sequences processed together (per microbatch, per device).
// `heads`/`kv_heads` are local counts; grouped-query attention is expressed
// by kv_heads < heads (key/value operands are shared within a group).
// `causal` marks an autoregressive mask the fused kernel can exploit by
// skipping fully-masked tiles; the standard implementation materializes the
// dense score matrix and applies the mask as data, so it never benefits.
struct AttentionShape {
  double batch = 1;
  double seq_q = 0;
  double seq_kv = 0;
  double heads = 1;
  double kv_heads = 1;
  double head_dim = 0;
  Precision precision = Precision::fp16;
  Phase phase = Phase::training;
  bool causal = true;
};

// Training-step multipliers relative to the forward pass.  The standard
// implementation's backward re-reads what forward wrote and doubles both
// flops and traffic.  The fused kernel's backward re-derives the score
// tiles on chip, costing extra arithmetic (2.5x forward) but only one more
// round of operand I/O (2x forward).  Because the fused backward already
// recomputes its own intermediates, it is never re-run under activation
// recompute; the engine applies these factors unconditionally.
inline constexpr double kStandardBackwardFactor = 2.0;
inline constexpr double kFlashBackwardComputeFactor = 2.5;
inline constexpr double kFlashBackwardIoFactor = 2.0;

// Per-element arithmetic for the score normalization chain.
inline constexpr double kMaskFlopsPerElement = 1.0;
inline constexpr double kDropoutFlopsPerElement = 1.0;

namespace detail {

inline double softmax_flops_per_element(Phase phase) {
  if (phase == Phase::training) {
    return kSoftmaxFlopsPerElement + kMaskFlopsPerElement +
           kDropoutFlopsPerElement;
  }
  return kSoftmaxFlopsPerElement;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Standard (materializing) attention
// ---------------------------------------------------------------------------
//
// Forward cost of the unfused implementation, per microbatch:
//   pass I   scores = Q K^T; streams Q and K, writes the score matrix.
//   pass II  mask + softmax + dropout over the scores; reads scores and the
//            additive mask tensor, writes probabilities, stores the dropout
//            keep-mask (one byte per element) for the backward pass.
//   pass III out = P V; re-reads probabilities, streams V, writes out.
// The O(N^2) intermediates travel through off-chip memory five times per
// forward (score write + read, mask read, probability write + read), which
// is exactly the traffic the fused kernel eliminates.  Operand and
// intermediate streams have no reuse at this granularity, so inner cache
// levels never bind and only the off-chip level is charged.
inline TimeBreakdown standard_attention_forward(const AttentionShape& s,
                                                const AcceleratorSpec& acc) {
  const double be = static_cast<double>(bytes_of(s.precision));
  const double inst = s.batch;  // sequence instances
  const double score_elems = inst * s.heads * s.seq_q * s.seq_kv;
  const double q_elems = inst * s.heads * s.seq_q * s.head_dim;
  const double k_elems = inst * s.kv_heads * s.seq_kv * s.head_dim;
  const double v_elems = k_elems;
  const double o_elems = q_elems;
  const bool training = s.phase == Phase::training;

  TimeBreakdown out;

  // Pass I: dense score GEMM.  The mask is applied later as data, so the
  // full rectangle is computed regardless of causality.
  {
    KernelDescriptor k("attn.qk", s.precision);
    k.flops = 2.0 * inst * s.heads * s.seq_q * s.seq_kv * s.head_dim;
    k.add_bytes(acc.outermost().name, (q_elems + k_elems + score_elems) * be);
    auto t = kernel_time(k, acc);
    out.add("attn.qk", t.seconds, t.bound_by);
  }

  // Pass II: mask + softmax (+ dropout in training).  Training reads the
  // additive mask tensor alongside the scores and persists the dropout
  // keep-mask as one byte per element.
  {
    KernelDescriptor k("attn.softmax", s.precision);
    k.flops = score_elems * detail::softmax_flops_per_element(s.phase);
    double bytes = 2.0 * score_elems * be;
    if (training) {
      bytes += score_elems * be;   // additive mask tensor read
      bytes += score_elems * 1.0;  // dropout keep-mask store
    }
    k.add_bytes(acc.outermost().name, bytes);
    auto t = kernel_time(k, acc);
    out.add("attn.softmax", t.seconds, t.bound_by);
  }

  // Pass III: probability-value GEMM; probabilities re-read once.
  {
    KernelDescriptor k("attn.pv", s.precision);
    k.flops = 2.0 * inst * s.heads * s.seq_q * s.seq_kv * s.head_dim;
    k.add_bytes(acc.outermost().name, (score_elems + v_elems + o_elems) * be);
    auto t = kernel_time(k, acc);
    out.add("attn.pv", t.seconds, t.bound_by);
  }

  return out;
}

// ---------------------------------------------------------------------------
// Fused (flash) attention
// ---------------------------------------------------------------------------

// Tiling derived from on-chip scratch capacity.  The kernel holds four
// row-blocks of width head_dim (Q, K, V tiles plus the output accumulator),
// giving tile_rows = floor(M / (4 * head_dim * bytes)).  Key/value rows are
// consumed in ceil(seq_kv / tile_rows) passes over the query blocks.
struct FlashTiling {
  double tile_rows = 0;
  double num_passes = 1;
};

inline FlashTiling flash_tiling(const AttentionShape& s,
                                const AcceleratorSpec& acc) {
  const double be = static_cast<double>(bytes_of(s.precision));
  const MemoryLevel& sram = acc.levels.back();
  const double rows = std::floor(sram.capacity_bytes / (4.0 * s.head_dim * be));
  if (rows < 1.0) {
    throw ConfigError("flash attention tile does not fit: level '" +
                      sram.name + "' capacity " + fmt_g(sram.capacity_bytes) +
                      " B < 4 * head_dim * bytes = " +
                      fmt_g(4.0 * s.head_dim * be) + " B");
  }
  FlashTiling t;
  t.tile_rows = rows;
  const double eff = std::min(rows, std::max(s.seq_kv, 1.0));
  t.num_passes = std::ceil(std::max(s.seq_kv, 1.0) / eff);
  return t;
}

// Forward cost of the fused implementation, per microbatch.
//
// Components:
//   attn.hbm_ld    off-chip reads: K and V once per kv head; Q once per
//                  pass; output and the two running softmax statistics
//                  re-loaded on every pass after the first.
//   attn.hbm_st    off-chip writes: output block and statistics per pass.
//   attn.gemm      the two tile GEMMs, priced against peak compute and
//                  on-chip scratch bandwidth (their operands never leave
//                  SRAM).
//   attn.pt_reduce mask + softmax + dropout evaluated on tiles in scratch;
//                  two scratch sweeps, nothing stored off chip (the
//                  dropout mask is regenerated from the RNG seed in the
//                  backward pass).
// A causal mask halves the score work (masked tiles are skipped); the
// off-chip operand traffic is unaffected.
inline TimeBreakdown flash_attention_forward(const AttentionShape& s,
                                             const AcceleratorSpec& acc) {
  const double be = static_cast<double>(bytes_of(s.precision));
  const FlashTiling tiling = flash_tiling(s, acc);
  const double T = tiling.num_passes;
  const double inst = s.batch;
  const double mask_scale = s.causal ? 0.5 : 1.0;
  const double score_elems = inst * s.heads * s.seq_q * s.seq_kv * mask_scale;
  const double q_elems = inst * s.heads * s.seq_q * s.head_dim;
  const double kv_elems = inst * s.kv_heads * s.seq_kv * s.head_dim;
  // Output block plus the two running statistics vectors, per pass.
  const double stat_elems = inst * s.heads * s.seq_q * (s.head_dim + 2.0);

  const std::string& hbm = acc.outermost().name;
  const std::string& sram = acc.levels.back().name;

  TimeBreakdown out;

  {
    KernelDescriptor k("attn.hbm_ld", s.precision);
    k.flops = 0.0;
    const double elems = 2.0 * kv_elems  // K and V, once each
                         + T * q_elems   // Q per pass
                         + (T - 1.0) * stat_elems;
    k.add_bytes(hbm, elems * be);
    auto t = kernel_time(k, acc);
    out.add("attn.hbm_ld", t.seconds, t.bound_by);
  }

  {
    KernelDescriptor k("attn.gemm", s.precision);
    k.flops = 4.0 * inst * s.heads * s.seq_q * s.seq_kv * s.head_dim *
              mask_scale;
    // Tile operands cycle through scratch: Q/K in, scores out, then
    // probabilities/V in, output out.
    const double scratch_elems =
        2.0 * score_elems + 2.0 * q_elems + 2.0 * kv_elems;
    k.add_bytes(sram, scratch_elems * be);
    auto t = kernel_time(k, acc);
    out.add("attn.gemm", t.seconds, t.bound_by);
  }

  {
    KernelDescriptor k("attn.pt_reduce", s.precision);
    k.flops = score_elems * detail::softmax_flops_per_element(s.phase);
    k.add_bytes(sram, 2.0 * score_elems * be);
    auto t = kernel_time(k, acc);
    out.add("attn.pt_reduce", t.seconds, t.bound_by);
  }

  {
    KernelDescriptor k("attn.hbm_st", s.precision);
    k.flops = 0.0;
    k.add_bytes(hbm, T * stat_elems * be);
    auto t = kernel_time(k, acc);
    out.add("attn.hbm_st", t.seconds, t.bound_by);
  }

  return out;
}

// Single-token decode step against a populated key/value cache: one query
// row per sequence attends to `seq_kv` cached rows.  Dominated by streaming
// the cache; modeled as one fused kernel (scores and normalization stay on
// chip because a single query row is tiny).
inline TimeBreakdown decode_attention_step(const AttentionShape& s,
                                           const AcceleratorSpec& acc) {
  const double be = static_cast<double>(bytes_of(s.precision));
  const double inst = s.batch;
  const double kv_elems = inst * s.kv_heads * s.seq_kv * s.head_dim;
  const double q_elems = inst * s.heads * s.head_dim;

  TimeBreakdown out;
  KernelDescriptor k("attn.decode", s.precision);
  k.flops = 4.0 * inst * s.heads * s.seq_kv * s.head_dim +
            inst * s.heads * s.seq_kv * kSoftmaxFlopsPerElement;
  k.add_bytes(acc.outermost().name, (2.0 * kv_elems + 2.0 * q_elems) * be);
  auto t = kernel_time(k, acc);
  out.add("attn.decode", t.seconds, t.bound_by);
  return out;
}

}  // namespace llmpc
