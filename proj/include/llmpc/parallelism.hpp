// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Parallelism configuration and its consequences: how the model and batch
// shard across devices, pipeline schedule timing, and the per-device memory
// footprint.
//
// Device ordering is tensor-parallel innermost, then data-parallel (expert
// parallelism lives inside the data-parallel extent), then pipeline stages
// outermost. Sequence parallelism rides the tensor-parallel group.

#pragma once

#include <algorithm>
#include <string>

#include "llmpc/common.hpp"
#include "llmpc/network.hpp"
#include "llmpc/sysdesc.hpp"
#include "llmpc/workload.hpp"

namespace llmpc {

enum class PipelineSchedule { gpipe, pipedream_flush };

inline const char* to_string(PipelineSchedule s) {
  return s == PipelineSchedule::gpipe ? "gpipe" : "pipedream_flush";
}

inline PipelineSchedule schedule_from_string(const std::string& s) {
  if (s == "gpipe") return PipelineSchedule::gpipe;
  if (s == "pipedream_flush" || s == "1f1b") return PipelineSchedule::pipedream_flush;
  throw ValidationError("unsupported schedule '" + s + "' (expected gpipe|pipedream_flush)");
}

struct ParallelismConfig {
  long long dp = 1, tp = 1, pp = 1, sp = 1;
  long long ep = 1, dp_exp = 1;  // expert-parallel split of the dp extent
  long long microbatches = 1;
  PipelineSchedule schedule = PipelineSchedule::gpipe;

  bool operator==(const ParallelismConfig&) const = default;

  long long devices() const { return dp * tp * pp; }
};

// Check degrees against the system and workload; returns the normalized
// config (expert parallelism defaulted to the data-parallel degree for MoE
// runs, so dp = ep * dp_exp always holds).
inline ParallelismConfig validate_parallelism(ParallelismConfig p, const SystemSpec& sys,
                                              const ModelConfig& model, const RunConfig& run) {
  model.validate();
  run.validate();
  if (p.dp < 1 || p.tp < 1 || p.pp < 1 || p.sp < 1 || p.ep < 1 || p.dp_exp < 1 ||
      p.microbatches < 1)
    throw ValidationError("parallelism: all degrees must be >= 1");

  if (p.devices() != sys.total_devices())
    throw ValidationError("parallelism: dp*tp*pp = " + std::to_string(p.devices()) +
                          " does not match system device count " +
                          std::to_string(sys.total_devices()));
  if (model.num_heads % p.tp != 0)
    throw ValidationError("parallelism: tp must divide num_heads");
  if (model.ffn_dim % p.tp != 0)
    throw ValidationError("parallelism: tp must divide ffn_dim");
  if (p.pp > 1 && model.num_layers % p.pp != 0)
    throw ValidationError("parallelism: pp must divide num_layers");
  if (p.sp > p.tp || p.tp % p.sp != 0)
    throw ValidationError("parallelism: sp must divide tp (sequence parallelism rides the TP group)");
  if (model.context_length % p.sp != 0)
    throw ValidationError("parallelism: sp must divide context_length");
  if (run.global_batch % (p.dp * p.microbatches) != 0)
    throw ValidationError("parallelism: dp*microbatches must divide global_batch");

  if (model.moe) {
    if (p.ep == 1 && p.dp_exp == 1 && p.dp > 1) p.ep = p.dp;  // default split
    if (p.ep * p.dp_exp != p.dp)
      throw ValidationError("parallelism: ep*dp_exp must equal dp (expert groups tile the data-parallel extent)");
    if (model.moe->num_experts % p.ep != 0)
      throw ValidationError("parallelism: ep must divide num_experts");
  } else {
    if (p.ep != 1 || p.dp_exp != 1)
      throw ValidationError("parallelism: ep/dp_exp require an MoE workload");
  }

  // The groups must also map cleanly onto the network hierarchy.
  factor_group(sys, 1, p.tp);
  factor_group(sys, p.tp, p.dp);
  factor_group(sys, p.tp * p.dp, p.pp);
  return p;
}

// Per-device slice of the workload.
struct DeviceShard {
  long long layers_per_stage = 0;
  long long heads_local = 0;
  long long kv_heads_local = 0;  // >= 1, duplicated when tp exceeds kv_heads
  long long ffn_cols_local = 0;
  long long experts_local = 0;
  long long seq_local = 0;
  long long batch_local = 0;           // sequences per data-parallel rank
  long long microbatch_sequences = 0;  // sequences per microbatch

  bool operator==(const DeviceShard&) const = default;
};

inline DeviceShard shard_workload(const ParallelismConfig& p, const ModelConfig& model,
                                  const RunConfig& run) {
  DeviceShard s;
  s.layers_per_stage = p.pp > 1 ? model.num_layers / p.pp : model.num_layers;
  s.heads_local = model.num_heads / p.tp;
  s.kv_heads_local = std::max<long long>(1, model.kv_heads / p.tp);
  s.ffn_cols_local = model.ffn_dim / p.tp;
  s.experts_local = model.moe ? model.moe->num_experts / p.ep : 0;
  s.seq_local = model.context_length / p.sp;
  s.batch_local = run.global_batch / p.dp;
  s.microbatch_sequences = s.batch_local / p.microbatches;
  return s;
}

struct PipelineTime {
  double total_seconds = 0;
  double bubble_fraction = 0;
};

// Synchronous pipeline makespan: m microbatches through p equal stages take
// (m + p - 1) stage slots; the (p - 1) fill/drain slots are bubble. The two
// supported schedules share this makespan and differ only in how many
// microbatches' activations stay live (see memory_footprint).
inline PipelineTime pipeline_time(double stage_seconds, long long microbatches,
                                  long long stages, PipelineSchedule /*schedule*/) {
  if (stage_seconds < 0) throw ValidationError("pipeline: negative stage time");
  if (microbatches < 1 || stages < 1) throw ValidationError("pipeline: m and p must be >= 1");
  double slots = static_cast<double>(microbatches + stages - 1);
  PipelineTime t;
  t.total_seconds = slots * stage_seconds;
  t.bubble_fraction = static_cast<double>(stages - 1) / slots;
  return t;
}

// ---------------------------------------------------------------------------
// Memory footprint.

// Stored activation working set per token, in units of hidden_dim elements.
// Covers block inputs, QKV/projection outputs, MLP intermediates and the
// dropout/residual state a backward pass needs.
inline constexpr double kActElemsPerTokenD = 17.0;
// Attention-matrix state per head per token per context position (scores and
// probabilities plus mask state), stored only when the memory-efficient
// attention path is off.
inline constexpr double kActAttnElemsPerTokenN = 2.5;

struct MemoryFootprint {
  double weights = 0;
  double gradients = 0;
  double optimizer_state = 0;
  double activations = 0;
  double kv_cache = 0;
  double capacity = 0;
  bool fits = true;

  double total() const { return weights + gradients + optimizer_state + activations + kv_cache; }
};

// Per-device parameter count under the given sharding. Dense parameters
// split across tp*pp; expert parameters additionally across ep.
inline double params_per_device(const ModelConfig& model, const ParallelismConfig& p) {
  double moe_layers = static_cast<double>(model.moe_layer_count());
  double dense_layers = static_cast<double>(model.num_layers) - moe_layers;
  double experts = model.moe ? static_cast<double>(model.moe->num_experts) : 1.0;
  double dense = model.num_layers * attention_params_per_layer(model) +
                 dense_layers * mlp_params_per_layer(model) +
                 static_cast<double>(model.vocab_size) * model.hidden_dim;
  double expert = moe_layers * experts * mlp_params_per_layer(model);
  return dense / (p.tp * p.pp) + expert / (p.ep * p.tp * p.pp);
}

inline MemoryFootprint memory_footprint(const ParallelismConfig& p, const ModelConfig& model,
                                        const RunConfig& run, const AcceleratorSpec& acc) {
  DeviceShard s = shard_workload(p, model, run);
  int be = bytes_of(run.precision);
  double params = params_per_device(model, p);

  MemoryFootprint f;
  f.capacity = acc.outermost().capacity_bytes;
  f.weights = params * be;

  double tokens_mb = static_cast<double>(s.microbatch_sequences) * model.context_length;
  double D = static_cast<double>(model.hidden_dim);

  if (run.phase == Phase::training) {
    f.gradients = params * be;
    // Mixed-precision training keeps fp32 master weights plus two fp32
    // moments; full-precision training needs the moments only.
    f.optimizer_state = params * (run.precision == Precision::fp32 ? 8.0 : 12.0);

    double live = p.schedule == PipelineSchedule::gpipe
                      ? static_cast<double>(p.microbatches)
                      : static_cast<double>(std::min(p.microbatches, p.pp));
    // Full stored state for one layer and one microbatch. Sequence
    // parallelism shards the stored activations across the TP group.
    double attn_state = run.flash_attention
                            ? 0.0
                            : kActAttnElemsPerTokenN * s.heads_local * model.context_length * tokens_mb;
    double layer_state = (kActElemsPerTokenD * tokens_mb * D / p.sp + attn_state) * be;
    if (run.activation_recompute) {
      // Only stage-boundary inputs stay resident per live microbatch, plus
      // one layer's working set being recomputed.
      f.activations = live * 2.0 * tokens_mb * D * be / p.sp + layer_state;
    } else {
      f.activations = live * s.layers_per_stage * layer_state;
    }
  } else {
    long long kv_len = model.context_length + run.decode_tokens;
    f.kv_cache = 2.0 * s.layers_per_stage * s.kv_heads_local * model.head_dim *
                 static_cast<double>(kv_len) * s.batch_local * be;
    // Inference working set: one layer's activations for the in-flight batch.
    f.activations = kActElemsPerTokenD * tokens_mb * D / p.sp * be;
  }

  f.fits = f.total() <= f.capacity;
  return f;
}

inline ParallelismConfig load_parallelism(const KvTree& kv) {
  ParallelismConfig p;
  p.dp = kv.integer_or("run.parallelism.dp", 1);
  p.tp = kv.integer_or("run.parallelism.tp", 1);
  p.pp = kv.integer_or("run.parallelism.pp", 1);
  p.sp = kv.integer_or("run.parallelism.sp", 1);
  p.ep = kv.integer_or("run.parallelism.ep", 1);
  p.dp_exp = kv.integer_or("run.parallelism.dp_exp", 1);
  p.microbatches = kv.integer_or("run.parallelism.microbatches", 1);
  p.schedule = schedule_from_string(kv.str_or("run.parallelism.schedule", "gpipe"));
  return p;
}

}  // namespace llmpc
