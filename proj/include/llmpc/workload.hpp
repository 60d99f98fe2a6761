// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Transformer workload description: model shape, optional mixture-of-experts
// layers, and the run parameters (phase, batch, precision, parallel degrees).
// Also the analytic counts derived from them: parameters, flops per token,
// KV-cache size.

#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "llmpc/common.hpp"
#include "llmpc/kvconfig.hpp"

namespace llmpc {

struct MoEConfig {
  long long num_experts = 1;
  long long top_k = 1;
  double capacity_factor = 1.0;
  // Every `stride`-th layer carries experts in place of its dense MLP
  // (stride 2 = every other layer, starting with layer index 1).
  long long moe_layer_stride = 2;

  bool operator==(const MoEConfig&) const = default;
};

struct ModelConfig {
  long long num_layers = 0;  // 0 is the degenerate embed/project-only model
  long long hidden_dim = 0;
  long long num_heads = 0;
  long long kv_heads = 0;  // < num_heads means grouped-query attention
  long long head_dim = 0;
  long long ffn_dim = 0;
  long long vocab_size = 0;
  long long context_length = 0;
  std::optional<MoEConfig> moe;

  bool operator==(const ModelConfig&) const = default;

  void validate() const {
    if (num_layers < 0) throw ValidationError("model: num_layers must be >= 0");
    if (hidden_dim < 1 || num_heads < 1 || kv_heads < 1 || head_dim < 1 || ffn_dim < 1 ||
        vocab_size < 1 || context_length < 1)
      throw ValidationError("model: all dimensions must be >= 1");
    if (num_heads * head_dim != hidden_dim)
      throw ValidationError("model: num_heads * head_dim must equal hidden_dim");
    if (num_heads % kv_heads != 0)
      throw ValidationError("model: kv_heads must divide num_heads");
    if (kv_heads > num_heads)
      throw ValidationError("model: kv_heads cannot exceed num_heads");
    if (moe) {
      if (moe->num_experts < 1) throw ValidationError("moe: num_experts must be >= 1");
      if (moe->top_k < 1 || moe->top_k > moe->num_experts)
        throw ValidationError("moe: top_k must be in [1, num_experts]");
      if (moe->capacity_factor < 1.0)
        throw ValidationError("moe: capacity_factor must be >= 1");
      if (moe->moe_layer_stride < 1)
        throw ValidationError("moe: moe_layer_stride must be >= 1");
    }
  }

  bool is_moe_layer(long long layer_idx) const {
    return moe && (layer_idx % moe->moe_layer_stride == moe->moe_layer_stride - 1);
  }

  long long moe_layer_count() const {
    if (!moe) return 0;
    long long n = 0;
    for (long long l = 0; l < num_layers; ++l)
      if (is_moe_layer(l)) ++n;
    return n;
  }
};

struct RunConfig {
  Phase phase = Phase::training;
  long long global_batch = 1;    // sequences
  Precision precision = Precision::fp16;
  double tokens_to_train = 0;    // 0 = report a single iteration only
  bool activation_recompute = false;
  bool flash_attention = false;
  long long decode_tokens = 0;   // generated tokens per request (inference)
  double requests = 0;           // serving volume (inference)

  bool operator==(const RunConfig&) const = default;

  void validate() const {
    if (global_batch < 1) throw ValidationError("run: global_batch must be >= 1");
    if (tokens_to_train < 0) throw ValidationError("run: tokens_to_train must be >= 0");
    if (decode_tokens < 0) throw ValidationError("run: decode_tokens must be >= 0");
    if (requests < 0) throw ValidationError("run: requests must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Counts.

// Per-layer attention parameters: query and output projections at hidden_dim
// squared each, key/value projections shrunk by grouped-query sharing.
inline double attention_params_per_layer(const ModelConfig& m) {
  double D = static_cast<double>(m.hidden_dim);
  return D * D                                          // Q
         + D * D                                        // output
         + 2.0 * D * m.kv_heads * m.head_dim;           // K and V
}

inline double mlp_params_per_layer(const ModelConfig& m) {
  // Two matrices, D -> ffn -> D. Gated MLP variants are handled by their
  // presets quoting an effective ffn width with the same parameter count.
  return 2.0 * static_cast<double>(m.hidden_dim) * m.ffn_dim;
}

// Total parameter count. For MoE models every expert's MLP counts; shared
// attention and embeddings count once.
inline double param_count(const ModelConfig& m) {
  m.validate();
  double moe_layers = static_cast<double>(m.moe_layer_count());
  double dense_layers = static_cast<double>(m.num_layers) - moe_layers;
  double experts = m.moe ? static_cast<double>(m.moe->num_experts) : 1.0;
  double per_attn = attention_params_per_layer(m);
  double per_mlp = mlp_params_per_layer(m);
  return static_cast<double>(m.num_layers) * per_attn + dense_layers * per_mlp +
         moe_layers * experts * per_mlp +
         static_cast<double>(m.vocab_size) * m.hidden_dim;  // embeddings
}

inline int train_flop_factor(bool activation_recompute) {
  // forward + 2x backward, plus one more forward when activations are
  // recomputed. This is the convention behind achieved-flops reporting.
  return activation_recompute ? 4 : 3;
}

// Flops per token for the active path, counting only useful model math. MoE
// layers count top_k expert MLPs; the router GEMM is excluded here (it is
// charged as time, not counted as model flops, so the count is exactly
// expert-count-invariant). The attention core is counted at the causal rate:
// only the lower triangle of the score matrix is useful work, whether or not
// an implementation materializes the full square.
//
// Training applies per-part forward+backward factors matching what actually
// executes: projection/MLP GEMMs replay under activation recompute (x4),
// the vocabulary head is never recomputed (x3), and the fused attention
// kernel regenerates its tiles on chip in the backward pass regardless of
// the recompute setting (x3.5, and exempt from the replay surcharge).
inline double flops_per_token(const ModelConfig& m, Phase phase, bool activation_recompute = false,
                              bool flash_attention = false) {
  m.validate();
  double D = static_cast<double>(m.hidden_dim);
  double N = static_cast<double>(m.context_length);
  double qkv = 2.0 * D * (D + 2.0 * m.kv_heads * m.head_dim);
  double proj = 2.0 * D * D;
  double core = 2.0 * N * D;  // causal QK^T and PV, each N*d per head per token
  double mlp_dense = 2.0 * mlp_params_per_layer(m);
  double active_mlp_moe = m.moe ? static_cast<double>(m.moe->top_k) * mlp_dense : mlp_dense;

  double moe_layers = static_cast<double>(m.moe_layer_count());
  double dense_layers = static_cast<double>(m.num_layers) - moe_layers;
  double gemms = dense_layers * (qkv + proj + mlp_dense) +
                 moe_layers * (qkv + proj + active_mlp_moe);
  double cores = static_cast<double>(m.num_layers) * core;
  double head = 2.0 * D * m.vocab_size;
  if (phase != Phase::training) return gemms + cores + head;

  double f_gemm = train_flop_factor(activation_recompute);
  double f_core = flash_attention ? 3.5 : f_gemm;
  return gemms * f_gemm + cores * f_core + head * 3.0;
}

// KV-cache footprint across the whole model for `seq_len` cached positions.
// Inference only: training keeps activations, not a KV cache.
inline double kv_cache_bytes(const ModelConfig& m, const RunConfig& r, long long seq_len) {
  m.validate();
  if (r.phase == Phase::training)
    throw ValidationError("kv_cache_bytes: KV cache is an inference-only concept");
  if (seq_len < 0) throw ValidationError("kv_cache_bytes: negative sequence length");
  return 2.0 * m.num_layers * m.kv_heads * m.head_dim * static_cast<double>(seq_len) *
         r.global_batch * bytes_of(r.precision);
}

// ---------------------------------------------------------------------------
// Config-file loading.

inline ModelConfig load_model(const KvTree& kv) {
  ModelConfig m;
  m.num_layers = kv.integer("workload.layers");
  m.hidden_dim = kv.integer("workload.hidden");
  m.num_heads = kv.integer("workload.heads");
  m.kv_heads = kv.integer_or("workload.kv_heads", m.num_heads);
  m.head_dim = kv.integer_or("workload.head_dim", m.num_heads > 0 ? m.hidden_dim / m.num_heads : 0);
  m.ffn_dim = kv.integer("workload.ffn");
  m.vocab_size = kv.integer("workload.vocab");
  m.context_length = kv.integer("workload.context");
  if (kv.has("workload.moe.experts")) {
    MoEConfig e;
    e.num_experts = kv.integer("workload.moe.experts");
    e.top_k = kv.integer_or("workload.moe.top_k", 1);
    e.capacity_factor = kv.num_or("workload.moe.capacity_factor", 1.0);
    e.moe_layer_stride = kv.integer_or("workload.moe.stride", 2);
    if (e.num_experts > 1) m.moe = e;
  }
  m.validate();
  return m;
}

inline RunConfig load_run(const KvTree& kv) {
  RunConfig r;
  r.phase = phase_from_string(kv.str_or("run.phase", "training"));
  r.global_batch = kv.integer_or("run.batch", 1);
  r.precision = precision_from_string(kv.str_or("run.precision", "fp16"));
  r.tokens_to_train = kv.num_or("run.tokens", 0);
  r.activation_recompute = kv.flag_or("run.recompute", false);
  r.flash_attention = kv.flag_or("run.flash_attention", false);
  r.decode_tokens = kv.integer_or("run.decode_tokens", 0);
  r.requests = kv.num_or("run.requests", 0);
  r.validate();
  return r;
}

inline void to_json(nlohmann::json& j, const ModelConfig& m) {
  j = nlohmann::json{{"layers", m.num_layers},       {"hidden", m.hidden_dim},
                     {"heads", m.num_heads},         {"kv_heads", m.kv_heads},
                     {"head_dim", m.head_dim},       {"ffn", m.ffn_dim},
                     {"vocab", m.vocab_size},        {"context", m.context_length}};
  if (m.moe)
    j["moe"] = {{"experts", m.moe->num_experts},
                {"top_k", m.moe->top_k},
                {"capacity_factor", m.moe->capacity_factor},
                {"stride", m.moe->moe_layer_stride}};
}

inline void to_json(nlohmann::json& j, const RunConfig& r) {
  j = nlohmann::json{{"phase", to_string(r.phase)},
                     {"batch", r.global_batch},
                     {"precision", to_string(r.precision)},
                     {"tokens", r.tokens_to_train},
                     {"recompute", r.activation_recompute},
                     {"flash_attention", r.flash_attention},
                     {"decode_tokens", r.decode_tokens},
                     {"requests", r.requests}};
}

}  // namespace llmpc
