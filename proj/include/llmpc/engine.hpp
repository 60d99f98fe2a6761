// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Prediction engine: composes the kernel, attention, expert and network
// models into end-to-end iteration, epoch, latency and serving estimates
// under a full parallelism configuration.

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmpc/attention.hpp"
#include "llmpc/breakdown.hpp"
#include "llmpc/common.hpp"
#include "llmpc/moe.hpp"
#include "llmpc/network.hpp"
#include "llmpc/parallelism.hpp"
#include "llmpc/roofline.hpp"
#include "llmpc/sysdesc.hpp"
#include "llmpc/workload.hpp"

namespace llmpc {

struct PredictionResult {
  // Per-iteration (training) or per-request-batch (inference) component
  // totals; total() equals the headline time exactly.
  TimeBreakdown breakdown;
  double iteration_time = 0;  // training: one optimizer step
  double epoch_time = 0;      // training: tokens_to_train worth of steps
  long long iterations_per_epoch = 0;

  double prefill_time = 0;       // inference
  double decode_step_time = 0;   // inference: one generated token
  double latency = 0;            // inference: prefill + decode budget
  double throughput_tokens_s = 0;
  double serving_time = 0;       // inference: fleet time for run.requests
  long long replicas = 1;

  double model_tflops = 0;  // achieved model flops per device
  double mfu = 0;           // fraction of peak
  double pipeline_bubble_fraction = 0;

  MemoryFootprint memory;
  bool feasible = true;
  std::vector<std::string> notes;
};

// Weighted comparison of a design point against a baseline: normalized
// training and inference times blended by `weight` (the training share).
inline double combined_metric(double train_time, double inference_time,
                              double base_train, double base_inference,
                              double weight) {
  if (base_train <= 0 || base_inference <= 0)
    throw ValidationError("combined_metric: baseline times must be positive");
  if (weight < 0 || weight > 1)
    throw ValidationError("combined_metric: weight must be in [0, 1]");
  return weight * (train_time / base_train) +
         (1.0 - weight) * (inference_time / base_inference);
}

namespace detail {

// Pointwise op with an explicit sweep count over off-chip memory.
// `mask_bytes_per_elem` covers side tensors that travel at a different
// width (dropout keep-masks are one byte per element).
inline void add_sweep_op(TimeBreakdown& bd, const std::string& label,
                         double elems, double sweeps, double flops_per_elem,
                         double mask_bytes_per_elem, Precision prec,
                         const AcceleratorSpec& acc) {
  if (elems <= 0) return;
  KernelDescriptor k(label, prec);
  k.flops = elems * flops_per_elem;
  k.add_bytes(acc.outermost().name,
              elems * (sweeps * bytes_of(prec) + mask_bytes_per_elem));
  auto t = kernel_time(k, acc);
  bd.add(label, t.seconds, t.bound_by);
}

// Multiplier classes for turning a forward breakdown into a training one.
enum class CostClass { compute, comm, flash_io, flash_compute };

inline CostClass classify(const std::string& label) {
  auto starts = [&](const char* p) { return label.rfind(p, 0) == 0; };
  if (starts("comm.") || starts("moe.a2a") || label == "moe.tp_allreduce")
    return CostClass::comm;
  if (label == "attn.hbm_ld" || label == "attn.hbm_st")
    return CostClass::flash_io;
  if (label == "attn.gemm" || label == "attn.pt_reduce")
    return CostClass::flash_compute;
  return CostClass::compute;
}

// Forward -> training-step scaling.  Compute components run forward,
// backward (2x) and, under activation recompute, one forward replay.
// Communication repeats per pass likewise.  The fused attention kernel is
// exempt from the recompute replay: its backward already regenerates the
// score tiles on chip, which is the whole point of storing nothing, so
// checkpointing implementations leave it out of the replayed region.  Its
// factors come from attention.hpp.
inline TimeBreakdown scale_for_training(const TimeBreakdown& fwd,
                                        bool recompute) {
  const double f_compute = recompute ? 4.0 : 3.0;
  const double f_comm = recompute ? 3.0 : 2.0;
  const double f_flash_io = 1.0 + kFlashBackwardIoFactor;
  const double f_flash_compute = 1.0 + kFlashBackwardComputeFactor;
  TimeBreakdown out;
  for (const auto& [label, sec] : fwd.components) {
    double f = f_compute;
    switch (classify(label)) {
      case CostClass::compute: f = f_compute; break;
      case CostClass::comm: f = f_comm; break;
      case CostClass::flash_io: f = f_flash_io; break;
      case CostClass::flash_compute: f = f_flash_compute; break;
    }
    auto it = fwd.bound_tags.find(label);
    out.add(label, sec * f, it == fwd.bound_tags.end() ? "" : it->second);
  }
  return out;
}

// All-to-all bandwidth for the expert-parallel group: the configured
// bandwidth at the outermost hierarchy level the group spans, defaulting to
// that level's link bandwidth.
inline double resolve_a2a_bandwidth(const SystemSpec& sys,
                                    const ParallelismConfig& par) {
  GroupSpan span = factor_group(sys, par.tp, par.ep);
  int lvl = span.outermost_active(sys);
  if (lvl < 0) lvl = 0;  // trivial group; any level works, payload is local
  const NetworkTopology& t = sys.levels[static_cast<size_t>(lvl)];
  return t.a2a_bandwidth_Bps > 0 ? t.a2a_bandwidth_Bps : t.link_bandwidth_Bps;
}

// One transformer layer, forward pass, per microbatch on one device.
// `rows` is the GEMM row count (tokens flowing through the layer) and
// `pw_tokens` the token count seen by pointwise work (sequence parallelism
// shards the latter but not the former).
inline TimeBreakdown layer_forward(const SystemSpec& sys,
                                   const ModelConfig& model,
                                   const RunConfig& run,
                                   const ParallelismConfig& par,
                                   const DeviceShard& shard, bool moe_layer,
                                   Phase phase, double rows,
                                   double pw_tokens) {
  const AcceleratorSpec& acc = sys.accelerator;
  const Precision prec = run.precision;
  const double be = static_cast<double>(bytes_of(prec));
  const double D = static_cast<double>(model.hidden_dim);
  const double ffn_local = static_cast<double>(shard.ffn_cols_local);
  const double kv_width =
      static_cast<double>(model.kv_heads) * model.head_dim;
  const double qkv_cols = (D + 2.0 * kv_width) / par.tp;
  const bool training = phase == Phase::training;

  TimeBreakdown bd;

  // --- attention block ---
  {
    KernelDescriptor k =
        gemm_descriptor("gemm.qkv", rows, qkv_cols, D, prec, acc);
    auto t = kernel_time(k, acc);
    bd.add("gemm.qkv", t.seconds, t.bound_by);
  }

  AttentionShape as;
  as.batch = rows / model.context_length;  // sequences represented by `rows`
  as.seq_q = static_cast<double>(model.context_length);
  as.seq_kv = static_cast<double>(model.context_length);
  as.heads = static_cast<double>(shard.heads_local);
  as.kv_heads = static_cast<double>(shard.kv_heads_local);
  as.head_dim = static_cast<double>(model.head_dim);
  as.precision = prec;
  as.phase = phase;
  as.causal = true;
  bd.merge_scaled(run.flash_attention ? flash_attention_forward(as, acc)
                                      : standard_attention_forward(as, acc),
                  1.0);

  if (phase == Phase::inference_prefill) {
    // Populate the KV cache: one streaming store of K and V.
    KernelDescriptor k("attn.kv_write", prec);
    k.flops = 0;
    k.add_bytes(acc.outermost().name,
                2.0 * shard.kv_heads_local * model.head_dim * rows * be);
    auto t = kernel_time(k, acc);
    bd.add("attn.kv_write", t.seconds, t.bound_by);
  }

  {
    KernelDescriptor k =
        gemm_descriptor("gemm.proj", rows, D, D / par.tp, prec, acc);
    auto t = kernel_time(k, acc);
    bd.add("gemm.proj", t.seconds, t.bound_by);
  }

  // --- feed-forward block ---
  if (!moe_layer) {
    KernelDescriptor f1 =
        gemm_descriptor("gemm.ffn1", rows, ffn_local, D, prec, acc);
    KernelDescriptor f2 =
        gemm_descriptor("gemm.ffn2", rows, D, ffn_local, prec, acc);
    auto t1 = kernel_time(f1, acc);
    auto t2 = kernel_time(f2, acc);
    bd.add("gemm.ffn1", t1.seconds, t1.bound_by);
    bd.add("gemm.ffn2", t2.seconds, t2.bound_by);
  } else {
    MoEShape ms;
    ms.tokens = rows;
    ms.hidden = D;
    ms.ffn_hidden = static_cast<double>(model.ffn_dim);
    ms.num_experts = static_cast<double>(model.moe->num_experts);
    ms.top_k = static_cast<double>(model.moe->top_k);
    ms.capacity_factor = model.moe->capacity_factor;
    ms.tp = static_cast<double>(par.tp);
    ms.ep = static_cast<double>(par.ep);
    ms.precision = prec;
    ms.phase = phase;
    GroupSpan tp_span = factor_group(sys, 1, par.tp);
    bd.merge_scaled(moe_layer_forward(ms, acc, sys, tp_span,
                                      resolve_a2a_bandwidth(sys, par)),
                    1.0);
  }

  // --- pointwise inventory ---
  // Everything here is sharded by sequence parallelism (pw_tokens), except
  // width-sharded tensors which are already divided by tp.
  const double tD = pw_tokens * D;
  add_sweep_op(bd, "pointwise.norm", tD, 2.0, kLayerNormFlopsPerElement, 0,
               prec, acc);  // pre-attention LN
  add_sweep_op(bd, "pointwise.norm", tD, 2.0, kLayerNormFlopsPerElement, 0,
               prec, acc);  // pre-MLP LN
  add_sweep_op(bd, "pointwise.bias", pw_tokens * qkv_cols, 2.0, 1.0, 0, prec,
               acc);
  add_sweep_op(bd, "pointwise.bias", tD, 2.0, 1.0, 0, prec, acc);  // proj
  if (!moe_layer) {
    add_sweep_op(bd, "pointwise.bias", pw_tokens * ffn_local, 2.0, 1.0, 0,
                 prec, acc);
    add_sweep_op(bd, "pointwise.act", pw_tokens * ffn_local, 2.0,
                 kGeluFlopsPerElement, 0, prec, acc);
    add_sweep_op(bd, "pointwise.bias", tD, 2.0, 1.0, 0, prec, acc);  // ffn2
  }
  if (training) {
    add_sweep_op(bd, "pointwise.dropout", tD, 2.0, 1.0, 1.0, prec, acc);
    add_sweep_op(bd, "pointwise.dropout", tD, 2.0, 1.0, 1.0, prec, acc);
  }
  add_sweep_op(bd, "pointwise.residual", tD, 3.0, 1.0, 0, prec, acc);
  add_sweep_op(bd, "pointwise.residual", tD, 3.0, 1.0, 0, prec, acc);

  // --- tensor-parallel collectives ---
  // One reduction after the attention projection and, for dense layers, one
  // after the second MLP GEMM (the expert path carries its own).  Sequence
  // parallelism turns each into an equal-volume reduce-scatter/all-gather
  // pair, which costs the same in this model.
  if (par.tp > 1) {
    GroupSpan tp_span = factor_group(sys, 1, par.tp);
    const double payload = rows * D * be;
    CommTime ar = hierarchical_collective_time(CollectiveKind::all_reduce,
                                               payload, sys, tp_span);
    bd.add("comm.tp", ar.seconds() * (moe_layer ? 1.0 : 2.0), "network");
  }

  return bd;
}

// Vocabulary projection; columns sharded across the tensor-parallel group
// (losses are computed on sharded logits, so no gather is charged).
inline TimeBreakdown head_forward(const SystemSpec& sys,
                                  const ModelConfig& model,
                                  const RunConfig& run,
                                  const ParallelismConfig& par, double rows) {
  TimeBreakdown bd;
  KernelDescriptor k = gemm_descriptor(
      "head.gemm", rows, static_cast<double>(model.vocab_size) / par.tp,
      static_cast<double>(model.hidden_dim), run.precision,
      sys.accelerator);
  auto t = kernel_time(k, sys.accelerator);
  bd.add("head.gemm", t.seconds, t.bound_by);
  return bd;
}

// Inter-stage activation transfer cost (one boundary tensor).
inline CommTime stage_p2p(const SystemSpec& sys, const ParallelismConfig& par,
                          double bytes) {
  GroupSpan span = factor_group(
      sys, static_cast<long long>(par.tp) * par.dp, par.pp);
  int lvl = span.outermost_active(sys);
  if (lvl < 0) lvl = static_cast<int>(sys.levels.size()) - 1;
  // Adjacent stages sit next to each other, so the transfer crosses the
  // innermost level the pipeline group occupies.
  for (size_t i = 0; i < span.per_level.size(); ++i) {
    if (span.per_level[i] > 1) {
      lvl = static_cast<int>(i);
      break;
    }
  }
  return p2p_delay(bytes, sys.levels[static_cast<size_t>(lvl)]);
}

inline long long moe_layers_per_stage(const ModelConfig& model,
                                      const ParallelismConfig& par) {
  if (!model.moe) return 0;
  long long per_stage = 0;
  long long stage_len = model.num_layers / par.pp;
  // Stages see the same mix when the stride divides the stage length; count
  // the first stage and rely on validate_parallelism's divisibility checks.
  for (long long i = 0; i < stage_len; ++i)
    if (model.is_moe_layer(i)) ++per_stage;
  return per_stage;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

inline PredictionResult predict_training(const SystemSpec& sys,
                                         const ModelConfig& model,
                                         const RunConfig& run,
                                         const ParallelismConfig& par_in) {
  model.validate();
  run.validate();
  const ParallelismConfig par = validate_parallelism(par_in, sys, model, run);
  const AcceleratorSpec& acc = sys.accelerator;
  const DeviceShard shard = shard_workload(par, model, run);
  const double be = static_cast<double>(bytes_of(run.precision));
  const double D = static_cast<double>(model.hidden_dim);

  const double rows =
      static_cast<double>(shard.microbatch_sequences) * model.context_length;
  const double pw_tokens = rows / par.sp;

  PredictionResult res;

  // Per-layer training costs.
  TimeBreakdown dense_train = detail::scale_for_training(
      detail::layer_forward(sys, model, run, par, shard, /*moe=*/false,
                            Phase::training, rows, pw_tokens),
      run.activation_recompute);
  TimeBreakdown moe_train;
  const long long moe_per_stage = detail::moe_layers_per_stage(model, par);
  if (moe_per_stage > 0) {
    moe_train = detail::scale_for_training(
        detail::layer_forward(sys, model, run, par, shard, /*moe=*/true,
                              Phase::training, rows, pw_tokens),
        run.activation_recompute);
  }
  const long long dense_per_stage = shard.layers_per_stage - moe_per_stage;

  // Stage time per microbatch, including boundary transfers.
  double stage_seconds = dense_per_stage * dense_train.total() +
                         moe_per_stage * moe_train.total();
  CommTime p2p{};
  if (par.pp > 1) {
    p2p = detail::stage_p2p(sys, par, rows * D * be / par.sp);
    stage_seconds += 2.0 * p2p.seconds();  // activations down, gradients up
  }

  // Vocabulary head: forward + backward only; never recomputed.
  TimeBreakdown head =
      detail::head_forward(sys, model, run, par, rows);
  const double head_train = head.total() * 3.0;

  const double m = static_cast<double>(par.microbatches);
  const double p = static_cast<double>(par.pp);

  // Assemble the iteration: every component's real work across all
  // microbatches, plus fill/drain idle time, plus the gradient exchange.
  res.breakdown.merge_scaled(dense_train, m * dense_per_stage);
  if (moe_per_stage > 0) res.breakdown.merge_scaled(moe_train, m * moe_per_stage);
  if (par.pp > 1)
    res.breakdown.add("comm.pp_p2p", m * 2.0 * p2p.seconds(), "network");
  res.breakdown.add("head.gemm", m * head_train,
                    head.bound_tags.count("head.gemm")
                        ? head.bound_tags.at("head.gemm")
                        : "");
  if (par.pp > 1)
    res.breakdown.add("pipeline.bubble", (p - 1.0) * stage_seconds, "idle");

  // Data-parallel gradient reduction: dense parameters across dp, expert
  // parameters across the expert-data groups.
  {
    const double expert_total =
        model.moe ? static_cast<double>(model.moe_layer_count()) *
                        model.moe->num_experts * mlp_params_per_layer(model)
                  : 0.0;
    const double dense_total = param_count(model) - expert_total;
    const double tp_pp = static_cast<double>(par.tp) * par.pp;
    if (par.dp > 1) {
      GroupSpan dp_span = factor_group(sys, par.tp, par.dp);
      CommTime ar = hierarchical_collective_time(
          CollectiveKind::all_reduce, dense_total / tp_pp * be, sys, dp_span);
      res.breakdown.add("comm.dp_allreduce", ar.seconds(), "network");
    }
    if (model.moe && par.dp_exp > 1) {
      GroupSpan span = factor_group(
          sys, static_cast<long long>(par.tp) * par.ep, par.dp_exp);
      CommTime ar = hierarchical_collective_time(
          CollectiveKind::all_reduce,
          expert_total / (static_cast<double>(par.ep) * tp_pp) * be, sys,
          span);
      res.breakdown.add("comm.dp_exp_allreduce", ar.seconds(), "network");
    }
  }

  res.iteration_time = res.breakdown.total();
  res.pipeline_bubble_fraction =
      par.pp > 1 ? (p - 1.0) / (m + p - 1.0) : 0.0;

  // Throughput metrics.
  const double tokens_per_iter =
      static_cast<double>(run.global_batch) * model.context_length;
  const double step_flops_per_token =
      flops_per_token(model, Phase::training, run.activation_recompute,
                      run.flash_attention);
  res.model_tflops = step_flops_per_token * tokens_per_iter /
                     (res.iteration_time * sys.total_devices()) / 1e12;
  const double peak = acc.peak(run.precision);
  res.mfu = res.model_tflops * 1e12 / peak;
  if (res.model_tflops * 1e12 > peak) {
    throw std::logic_error(
        "model defect: achieved flops exceed peak (" +
        fmt_g(res.model_tflops * 1e12) + " > " + fmt_g(peak) + ")");
  }

  if (run.tokens_to_train > 0) {
    res.iterations_per_epoch = static_cast<long long>(
        std::ceil(run.tokens_to_train / tokens_per_iter));
    res.epoch_time = res.iterations_per_epoch * res.iteration_time;
  }

  res.memory = memory_footprint(par, model, run, acc);
  res.feasible = res.memory.fits;
  if (!res.feasible)
    res.notes.push_back("memory footprint " + fmt_g(res.memory.total()) +
                        " B exceeds device capacity " +
                        fmt_g(res.memory.capacity) + " B");
  if (model.moe)
    res.notes.push_back(
        "expert load assumed balanced: capacity padding covers routing up to "
        "the configured factor, hot experts beyond it would serialize");
  return res;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

namespace detail {

// One decoder step, per device: every layer touches the cached context.
inline TimeBreakdown decode_layer(const SystemSpec& sys,
                                  const ModelConfig& model,
                                  const RunConfig& run,
                                  const ParallelismConfig& par,
                                  const DeviceShard& shard, bool moe_layer) {
  const AcceleratorSpec& acc = sys.accelerator;
  const Precision prec = run.precision;
  const double be = static_cast<double>(bytes_of(prec));
  const double D = static_cast<double>(model.hidden_dim);
  const double rows = static_cast<double>(shard.batch_local);  // 1 token/seq
  const double kv_width = static_cast<double>(model.kv_heads) * model.head_dim;

  TimeBreakdown bd;
  {
    KernelDescriptor k = gemm_descriptor(
        "gemm.qkv", rows, (D + 2.0 * kv_width) / par.tp, D, prec, acc);
    auto t = kernel_time(k, acc);
    bd.add("gemm.qkv", t.seconds, t.bound_by);
  }
  {
    AttentionShape as;
    as.batch = rows;
    as.seq_q = 1;
    as.seq_kv = static_cast<double>(model.context_length);  // worst case
    as.heads = static_cast<double>(shard.heads_local);
    as.kv_heads = static_cast<double>(shard.kv_heads_local);
    as.head_dim = static_cast<double>(model.head_dim);
    as.precision = prec;
    as.phase = Phase::inference_decode;
    as.causal = false;
    bd.merge_scaled(decode_attention_step(as, acc), 1.0);
  }
  {
    KernelDescriptor k =
        gemm_descriptor("gemm.proj", rows, D, D / par.tp, prec, acc);
    auto t = kernel_time(k, acc);
    bd.add("gemm.proj", t.seconds, t.bound_by);
  }
  if (!moe_layer) {
    KernelDescriptor f1 = gemm_descriptor(
        "gemm.ffn1", rows, static_cast<double>(shard.ffn_cols_local), D,
        prec, acc);
    KernelDescriptor f2 = gemm_descriptor(
        "gemm.ffn2", rows, D, static_cast<double>(shard.ffn_cols_local),
        prec, acc);
    auto t1 = kernel_time(f1, acc);
    auto t2 = kernel_time(f2, acc);
    bd.add("gemm.ffn1", t1.seconds, t1.bound_by);
    bd.add("gemm.ffn2", t2.seconds, t2.bound_by);
  } else {
    MoEShape ms;
    ms.tokens = rows;
    ms.hidden = D;
    ms.ffn_hidden = static_cast<double>(model.ffn_dim);
    ms.num_experts = static_cast<double>(model.moe->num_experts);
    ms.top_k = static_cast<double>(model.moe->top_k);
    ms.capacity_factor = model.moe->capacity_factor;
    ms.tp = static_cast<double>(par.tp);
    ms.ep = static_cast<double>(par.ep);
    ms.precision = prec;
    ms.phase = Phase::inference_decode;
    GroupSpan tp_span = factor_group(sys, 1, par.tp);
    bd.merge_scaled(moe_layer_forward(ms, acc, sys, tp_span,
                                      resolve_a2a_bandwidth(sys, par)),
                    1.0);
  }
  add_sweep_op(bd, "pointwise.norm", rows * D, 2.0, kLayerNormFlopsPerElement,
               0, prec, acc);
  add_sweep_op(bd, "pointwise.norm", rows * D, 2.0, kLayerNormFlopsPerElement,
               0, prec, acc);
  add_sweep_op(bd, "pointwise.residual", rows * D, 3.0, 1.0, 0, prec, acc);
  add_sweep_op(bd, "pointwise.residual", rows * D, 3.0, 1.0, 0, prec, acc);
  // KV-cache append for the new token.
  {
    KernelDescriptor k("attn.kv_write", prec);
    k.flops = 0;
    k.add_bytes(acc.outermost().name,
                2.0 * shard.kv_heads_local * model.head_dim * rows * be);
    auto t = kernel_time(k, acc);
    bd.add("attn.kv_write", t.seconds, t.bound_by);
  }
  if (par.tp > 1) {
    GroupSpan tp_span = factor_group(sys, 1, par.tp);
    CommTime ar = hierarchical_collective_time(CollectiveKind::all_reduce,
                                               rows * D * be, sys, tp_span);
    bd.add("comm.tp", ar.seconds() * (moe_layer ? 1.0 : 2.0), "network");
  }
  return bd;
}

}  // namespace detail

inline PredictionResult predict_inference(const SystemSpec& sys,
                                          const ModelConfig& model,
                                          const RunConfig& run,
                                          const ParallelismConfig& par_in) {
  model.validate();
  run.validate();
  const ParallelismConfig par = validate_parallelism(par_in, sys, model, run);
  const DeviceShard shard = shard_workload(par, model, run);
  const double be = static_cast<double>(bytes_of(run.precision));
  const double D = static_cast<double>(model.hidden_dim);

  PredictionResult res;
  res.replicas = sys.total_devices() / (par.tp * par.pp);

  const double rows =
      static_cast<double>(shard.microbatch_sequences) * model.context_length;
  const double m = static_cast<double>(par.microbatches);
  const double p = static_cast<double>(par.pp);

  // ---- prefill: the prompt flows through the pipeline once ----
  TimeBreakdown dense_pre = detail::layer_forward(
      sys, model, run, par, shard, /*moe=*/false, Phase::inference_prefill,
      rows, rows / par.sp);
  const long long moe_per_stage = detail::moe_layers_per_stage(model, par);
  TimeBreakdown moe_pre;
  if (moe_per_stage > 0)
    moe_pre = detail::layer_forward(sys, model, run, par, shard, true,
                                    Phase::inference_prefill, rows,
                                    rows / par.sp);
  const long long dense_per_stage = shard.layers_per_stage - moe_per_stage;

  double stage_pre = dense_per_stage * dense_pre.total() +
                     moe_per_stage * moe_pre.total();
  CommTime p2p_pre{};
  if (par.pp > 1) {
    p2p_pre = detail::stage_p2p(sys, par, rows * D * be / par.sp);
    stage_pre += p2p_pre.seconds();  // forward hand-off only
  }
  res.prefill_time = (m + p - 1.0) * stage_pre;

  res.breakdown.metadata = "prefill+decode";
  {
    TimeBreakdown pre;
    pre.merge_scaled(dense_pre, m * dense_per_stage);
    if (moe_per_stage > 0) pre.merge_scaled(moe_pre, m * moe_per_stage);
    if (par.pp > 1) pre.add("comm.pp_p2p", m * p2p_pre.seconds(), "network");
    if (par.pp > 1)
      pre.add("pipeline.bubble", (p - 1.0) * stage_pre, "idle");
    for (const auto& [l, s] : pre.components) {
      auto it = pre.bound_tags.find(l);
      res.breakdown.add("prefill." + l, s,
                        it == pre.bound_tags.end() ? "" : it->second);
    }
  }

  // ---- decode: one token at a time through all stages ----
  if (run.decode_tokens > 0) {
    TimeBreakdown dense_dec =
        detail::decode_layer(sys, model, run, par, shard, false);
    TimeBreakdown moe_dec;
    if (moe_per_stage > 0)
      moe_dec = detail::decode_layer(sys, model, run, par, shard, true);
    double stage_dec = dense_per_stage * dense_dec.total() +
                       moe_per_stage * moe_dec.total();
    CommTime p2p_dec{};
    if (par.pp > 1) {
      p2p_dec = detail::stage_p2p(
          sys, par, static_cast<double>(shard.batch_local) * D * be);
      stage_dec += p2p_dec.seconds();
    }
    TimeBreakdown head = detail::head_forward(
        sys, model, run, par, static_cast<double>(shard.batch_local));
    res.decode_step_time = p * stage_dec + head.total();

    TimeBreakdown dec;
    dec.merge_scaled(dense_dec, p * dense_per_stage);
    if (moe_per_stage > 0) dec.merge_scaled(moe_dec, p * moe_per_stage);
    if (par.pp > 1) dec.add("comm.pp_p2p", p * p2p_dec.seconds(), "network");
    dec.merge_scaled(head, 1.0);
    const double n_steps = static_cast<double>(run.decode_tokens);
    for (const auto& [l, s] : dec.components) {
      auto it = dec.bound_tags.find(l);
      res.breakdown.add("decode." + l, s * n_steps,
                        it == dec.bound_tags.end() ? "" : it->second);
    }
  }

  res.latency = res.prefill_time + run.decode_tokens * res.decode_step_time;
  res.iteration_time = res.latency;
  if (res.latency > 0 && run.decode_tokens > 0) {
    res.throughput_tokens_s =
        static_cast<double>(run.global_batch) * run.decode_tokens /
        res.latency;
  }
  if (run.requests > 0) {
    res.serving_time = run.requests * res.latency /
                       (static_cast<double>(shard.batch_local) * res.replicas);
  }

  // Prompt tokens run the transformer stack only; the vocabulary head runs
  // once per generated token (prefill emits no logits except through the
  // first decode step).
  const double head_flops =
      2.0 * static_cast<double>(model.hidden_dim) * model.vocab_size;
  const double inf_flops =
      (flops_per_token(model, Phase::inference_prefill) - head_flops) *
          static_cast<double>(run.global_batch) * model.context_length +
      head_flops * static_cast<double>(run.global_batch) * run.decode_tokens;
  if (res.latency > 0) {
    res.model_tflops =
        inf_flops / (res.latency * sys.total_devices()) / 1e12;
    res.mfu =
        res.model_tflops * 1e12 / sys.accelerator.peak(run.precision);
  }

  res.memory = memory_footprint(par, model, run, sys.accelerator);
  res.feasible = res.memory.fits;
  if (!res.feasible)
    res.notes.push_back("memory footprint " + fmt_g(res.memory.total()) +
                        " B exceeds device capacity " +
                        fmt_g(res.memory.capacity) + " B");
  return res;
}

inline PredictionResult predict(const SystemSpec& sys, const ModelConfig& model,
                                const RunConfig& run,
                                const ParallelismConfig& par) {
  return is_inference(run.phase) ? predict_inference(sys, model, run, par)
                                 : predict_training(sys, model, run, par);
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

inline nlohmann::json prediction_report(const PredictionResult& r,
                                        const SystemSpec& sys,
                                        const ModelConfig& model,
                                        const RunConfig& run,
                                        const ParallelismConfig& par,
                                        const std::string& fingerprint) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& [l, s] : r.breakdown.components) {
    nlohmann::json c{{"name", l}, {"seconds", s}};
    auto it = r.breakdown.bound_tags.find(l);
    if (it != r.breakdown.bound_tags.end()) c["bound_by"] = it->second;
    if (r.iteration_time > 0) c["share"] = s / r.iteration_time;
    comps.push_back(c);
  }
  nlohmann::json j{
      {"schema_version", 1},
      {"config_fingerprint", fingerprint},
      {"model", model},
      {"run", run},
      {"parallelism",
       {{"dp", par.dp},
        {"tp", par.tp},
        {"pp", par.pp},
        {"sp", par.sp},
        {"ep", par.ep},
        {"dp_exp", par.dp_exp},
        {"microbatches", par.microbatches},
        {"schedule", to_string(par.schedule)}}},
      {"system",
       {{"accelerator", sys.accelerator.name},
        {"devices", sys.total_devices()}}},
      {"time",
       {{"total_s", r.iteration_time},
        {"components", comps},
        {"pipeline_bubble_fraction", r.pipeline_bubble_fraction}}},
      {"metrics",
       {{"model_tflops_per_device", r.model_tflops}, {"mfu", r.mfu}}},
      {"memory",
       {{"weights_B", r.memory.weights},
        {"gradients_B", r.memory.gradients},
        {"optimizer_state_B", r.memory.optimizer_state},
        {"activations_B", r.memory.activations},
        {"kv_cache_B", r.memory.kv_cache},
        {"capacity_B", r.memory.capacity},
        {"total_B", r.memory.total()}}},
      {"feasible", r.feasible},
      {"notes", r.notes}};
  if (is_inference(run.phase)) {
    j["inference"] = {{"prefill_s", r.prefill_time},
                      {"decode_step_s", r.decode_step_time},
                      {"latency_s", r.latency},
                      {"throughput_tokens_per_s", r.throughput_tokens_s},
                      {"serving_s", r.serving_time},
                      {"replicas", r.replicas}};
  } else {
    j["training"] = {{"iteration_s", r.iteration_time},
                     {"epoch_s", r.epoch_time},
                     {"iterations_per_epoch", r.iterations_per_epoch}};
  }
  return j;
}

}  // namespace llmpc
