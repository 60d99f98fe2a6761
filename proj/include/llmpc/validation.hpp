// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: end-to-end checks that pin the model's headline
// predictions to published reference points and to internal oracles.
// Each check prints one line: id, PASS/FAIL, measured vs expected vs
// tolerance. Tolerances are fixed here, in code, on purpose.

#pragma once

#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "llmpc/chipcost.hpp"
#include "llmpc/engine.hpp"
#include "llmpc/eventsim.hpp"
#include "llmpc/kvconfig.hpp"
#include "llmpc/llmpc_version.hpp"
#include "llmpc/workload.hpp"

namespace llmpc::validation {

struct CheckResult {
  std::string id;      // e.g. "01.flash-speedup-bands"
  std::string suite;   // --only filter key
  bool pass = false;
  std::string detail;  // measured vs expected vs tolerance
};

namespace detail {

inline std::string sfmt(const char* fmt, ...) {
  char buf[768];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  return std::string(buf);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pinned tolerances and reference bands.
// ---------------------------------------------------------------------------

// Published speed-up envelope for the fused-attention comparison, with the
// agreed 8% band semantics applied to the band edges.
inline constexpr double kFlashBandLo = 1.3 * 0.92;   // 1.196
inline constexpr double kFlashBandHi = 1.7 * 1.08;   // 1.836
inline constexpr double kFlashLongCtxMin = 3.0;      // 4k-vs-4k, strict
// Tensor-parallel decay: the TP=1 point sits near 1.7x; +-15%.
inline constexpr double kTpPointLo = 1.45;
inline constexpr double kTpPointHi = 1.95;
// Training anchor: 149 TFLOP/s +-15%.
inline constexpr double kAnchorTflopsLo = 127.0;
inline constexpr double kAnchorTflopsHi = 171.0;
// Sparse-vs-dense per-token ratio: 6.1x +-20%.
inline constexpr double kMoeRatioLo = 4.9;
inline constexpr double kMoeRatioHi = 7.3;
inline constexpr double kMoeFlashLo = 1.05;
inline constexpr double kMoeFlashHi = 1.15;
// Closed form vs discrete-event oracle.
inline constexpr double kOracleRelTol = 1e-9;

class Acceptance {
 public:
  explicit Acceptance(std::string preset_dir)
      : dir_(std::move(preset_dir)) {}

  std::vector<CheckResult> run(const std::string& only = "") {
    std::vector<CheckResult> out;
    auto want = [&](const char* suite) {
      return only.empty() || only == suite;
    };
    if (want("flash")) out.push_back(check_flash_bands());
    if (want("batch")) out.push_back(check_batch_monotonicity());
    if (want("tp")) out.push_back(check_tp_decay());
    if (want("moe")) out.push_back(check_moe_scaling());
    if (want("network")) out.push_back(check_collective_oracle());
    if (want("network")) out.push_back(check_topology_ordering());
    if (want("anchor")) out.push_back(check_training_anchor());
    if (want("anchor")) out.push_back(check_moe_vs_dense());
    if (want("equations")) out.push_back(check_closed_forms());
    if (want("cost")) out.push_back(check_cost_design_point());
    if (want("conservation")) out.push_back(check_conservation());
    return out;
  }

 private:
  std::string dir_;

  KvTree tree(const std::string& rel) const {
    return KvTree::from_file(dir_ + "/" + rel, dir_);
  }
  SystemSpec system(const std::string& rel) const {
    return load_system(tree(rel));
  }
  ModelConfig model(const std::string& rel) const {
    return load_model(tree(rel));
  }

  // Per-token training time for one config; contexts and the attention
  // algorithm are varied around a fixed base model.
  static double per_token_time(const SystemSpec& sys, ModelConfig m,
                               const RunConfig& r, const ParallelismConfig& p,
                               long long context, bool flash) {
    m.context_length = context;
    RunConfig r2 = r;
    r2.flash_attention = flash;
    PredictionResult res = predict_training(sys, m, r2, p);
    return res.iteration_time /
           (static_cast<double>(r2.global_batch) * context);
  }

  // -------------------------------------------------------------------------
  // 1. Fused-attention speed-up bands (two small dense models, one node).
  // -------------------------------------------------------------------------
  CheckResult check_flash_bands() {
    CheckResult c{"01.flash-speedup-bands", "flash", false, ""};
    try {
      SystemSpec sys = system("systems/dgx-a100-40gb-8x.conf");
      RunConfig run;
      run.phase = Phase::training;
      run.global_batch = 8;
      run.precision = Precision::fp16;
      ParallelismConfig par;
      par.dp = 8;

      bool ok = true;
      std::string detail;
      for (const char* name : {"models/gpt2-small.conf", "models/gpt2-medium.conf"}) {
        ModelConfig m = model(name);
        const double base = per_token_time(sys, m, run, par, 1024, false);
        const double s1 = base / per_token_time(sys, m, run, par, 1024, true);
        const double s2 = base / per_token_time(sys, m, run, par, 2048, true);
        const double s4 = base / per_token_time(sys, m, run, par, 4096, true);
        const double cross = per_token_time(sys, m, run, par, 4096, false) /
                             per_token_time(sys, m, run, par, 4096, true);
        for (double s : {s1, s2, s4})
          ok = ok && s >= kFlashBandLo && s <= kFlashBandHi;
        ok = ok && cross > kFlashLongCtxMin;
        detail += detail::sfmt("%s: 1k/2k/4k=%.3f/%.3f/%.3f 4kx=%.2f  ",
                               m.hidden_dim == 768 ? "small" : "medium", s1,
                               s2, s4, cross);
      }
      c.pass = ok;
      c.detail = detail + detail::sfmt("(bands [%.3f, %.3f], long-ctx > %.1f)",
                                       kFlashBandLo, kFlashBandHi,
                                       kFlashLongCtxMin);
    } catch (const std::exception& e) {
      c.detail = std::string("error: ") + e.what();
    }
    return c;
  }

  // -------------------------------------------------------------------------
  // 2. Speed-up grows with batch; faster parts widen the gap.
  // -------------------------------------------------------------------------
  CheckResult check_batch_monotonicity() {
    CheckResult c{"02.batch-monotonicity", "batch", false, ""};
    try {
      ModelConfig xl = model("models/gpt2-xl.conf");
      auto speedup = [&](const SystemSpec& sys, long long batch) {
        RunConfig r;
        r.phase = Phase::training;
        r.global_batch = batch;
        r.precision = Precision::fp16;
        ParallelismConfig p;
        p.dp = 16;
        const double t_std =
            predict_training(sys, xl, r, p).iteration_time;
        r.flash_attention = true;
        const double t_fa = predict_training(sys, xl, r, p).iteration_time;
        return t_std / t_fa;
      };
      SystemSpec h100 = system("systems/h100-16x.conf");
      double s512 = speedup(h100, 512), s1k = speedup(h100, 1024),
             s2k = speedup(h100, 2048), s4k = speedup(h100, 4096);
      bool mono = s1k >= s512 && s2k >= s1k && s4k >= s2k;
      SystemSpec a100 = system("systems/a100-40gb-16x.conf");
      SystemSpec b200 = system("systems/b200-16x.conf");
      const double sa = speedup(a100, 2048);
      const double sb = speedup(b200, 2048);
      bool order = sa < s2k && s2k < sb;
      c.pass = mono && order;
      c.detail = detail::sfmt(
          "H100 speedups %.4f/%.4f/%.4f/%.4f (nondecreasing: %s); "
          "A100 %.4f < H100 %.4f < B200 %.4f at B=2048 (%s)",
          s512, s1k, s2k, s4k, mono ? "yes" : "NO", sa, s2k, sb,
          order ? "yes" : "NO");
    } catch (const std::exception& e) {
      c.detail = std::string("error: ") + e.what();
    }
    return c;
  }

  // -------------------------------------------------------------------------
  // 3. Tensor parallelism dilutes the attention share; speed-up decays.
  // -------------------------------------------------------------------------
  CheckResult check_tp_decay() {
    CheckResult c{"03.tp-decay", "tp", false, ""};
    try {
      SystemSpec sys = system("systems/dgx-a100-40gb-8x.conf");
      ModelConfig m = model("models/gpt2-medium.conf");
      auto speedup = [&](int tp) {
        RunConfig r;
        r.phase = Phase::training;
        r.global_batch = 16;
        r.precision = Precision::fp16;
        ParallelismConfig p;
        p.tp = tp;
        p.dp = 8 / tp;
        const double t_std = predict_training(sys, m, r, p).iteration_time;
        r.flash_attention = true;
        return t_std / predict_training(sys, m, r, p).iteration_time;
      };
      const double s1 = speedup(1), s2 = speedup(2), s4 = speedup(4);
      c.pass = s1 >= kTpPointLo && s1 <= kTpPointHi && s2 < s1 && s4 < s2;
      c.detail = detail::sfmt(
          "speedup tp1/tp2/tp4 = %.3f/%.3f/%.3f; tp1 in [%.2f, %.2f], "
          "strictly decreasing: %s",
          s1, s2, s4, kTpPointLo, kTpPointHi,
          (s2 < s1 && s4 < s2) ? "yes" : "NO");
    } catch (const std::exception& e) {
      c.detail = std::string("error: ") + e.what();
    }
    return c;
  }

  // -------------------------------------------------------------------------
  // 4. Expert strong scaling: one expert per data-parallel rank.
  // -------------------------------------------------------------------------
  CheckResult check_moe_scaling() {
    CheckResult c{"04.moe-strong-scaling", "moe", false, ""};
    try {
      ModelConfig base = model("models/gpt3-6.7b.conf");
      std::vector<int> gpus = {16, 32, 64, 128, 256};
      std::vector<double> times;
      std::vector<double> flops;
      for (int g : gpus) {
        const int dp = g / 4;
        ModelConfig m = base;
        MoEConfig moe;
        moe.num_experts = dp;  // one expert per expert-parallel rank
        moe.top_k = 1;
        moe.capacity_factor = 1.0;
        moe.moe_layer_stride = 2;
        m.moe = moe;
        RunConfig r;
        r.phase = Phase::training;
        r.global_batch = 1024;
        r.precision = Precision::fp16;
        r.activation_recompute = true;
        ParallelismConfig p;
        p.tp = 4;
        p.dp = dp;
        p.ep = dp;
        p.dp_exp = 1;
        SystemSpec sys = system("systems/summit-like-" + std::to_string(g) + "x.conf");
        times.push_back(predict_training(sys, m, r, p).iteration_time);
        flops.push_back(flops_per_token(m, Phase::training, true));
      }
      bool decreasing = true, saturating = true, flops_const = true;
      for (size_t i = 1; i < times.size(); ++i)
        decreasing = decreasing && times[i] < times[i - 1];
      for (size_t i = 2; i < times.size(); ++i)
        saturating = saturating && (times[i - 1] - times[i]) <
                                       (times[i - 2] - times[i - 1]);
      for (size_t i = 1; i < flops.size(); ++i)
        flops_const = flops_const && flops[i] == flops[0];
      c.pass = decreasing && saturating && flops_const;
      c.detail = detail::sfmt(
          "batch times (s) 16..256 gpus: %.2f/%.2f/%.2f/%.2f/%.2f; "
          "decreasing %s, saturating %s, flops expert-invariant %s (exact)",
          times[0], times[1], times[2], times[3], times[4],
          decreasing ? "yes" : "NO", saturating ? "yes" : "NO",
          flops_const ? "yes" : "NO");
    } catch (const std::exception& e) {
      c.detail = std::string("error: ") + e.what();
    }
    return c;
  }

  // -------------------------------------------------------------------------
  // 5. Closed-form collectives vs the discrete-event oracle.
  // -------------------------------------------------------------------------
  CheckResult check_collective_oracle() {
    CheckResult c{"05.collective-oracle", "network", false, ""};
    try {
      const int p = 16;
      std::vector<NetworkTopology> topos;
      {
        NetworkTopology t;
        t.size = p;
        t.link_bandwidth_Bps = 150e9;
        t.link_latency_s = 0.5e-6;
        t.switch_delay_s = 0.5e-6;
        t.kind = TopologyKind::ring;
        topos.push_back(t);
        t.kind = TopologyKind::switched;
        topos.push_back(t);
        t.kind = TopologyKind::fully_connected;
        topos.push_back(t);
        t.kind = TopologyKind::mesh2d;
        t.mesh_rows = 4;
        t.mesh_cols = 4;
        topos.push_back(t);
      }
      const std::vector<double> payloads = {64e6, 256e6, 512e6, 1e9, 1.5e9};
      double worst = 0;
      bool ok = true;
      for (const auto& t : topos) {
        for (double d : payloads) {
          CollectiveRequest req{CollectiveKind::all_reduce, d, p, t};
          const double analytic = all_reduce_time(req).seconds();
          sim::SimResult s = sim::simulate_all_reduce(d, p, t);
          const double rel = std::abs(analytic - s.seconds) / analytic;
          worst = std::max(worst, rel);
          ok = ok && rel <= kOracleRelTol && s.data_complete;
          if (t.kind == TopologyKind::ring) {
            const double want = 2.0 * d * (p - 1) / p;
            for (double b : s.bytes_sent) ok = ok && b == want;
          }
        }
      }
      c.pass = ok;
      c.detail = detail::sfmt(
          "4 topologies x 5 payloads (64MB..1.5GB, 16 devices): worst "
          "|analytic-sim|/analytic = %.2e (tol %.0e); ring per-device volume "
          "== 2d(p-1)/p exactly: %s",
          worst, kOracleRelTol, ok ? "yes" : "NO");
    } catch (const std::exception& e) {
      c.detail = std::string("error: ") + e.what();
    }
    return c;
  }

  // -------------------------------------------------------------------------
  // 6. Topology ordering for tensor-parallel inference.
  // -------------------------------------------------------------------------
  CheckResult check_topology_ordering() {
    CheckResult c{"06.topology-ordering", "network", false, ""};
    try {
      ModelConfig m = model("models/llama2-70b.conf");
      auto comm_time = [&](const std::string& sys_rel, int tp) {
        SystemSpec sys = system(sys_rel);
        RunConfig r;
        r.phase = Phase::inference_prefill;
        r.global_batch = 8;
        r.precision = Precision::fp16;
        // Scoring pass only: prompt processing moves the large activation
        // payloads where link bandwidth, not per-step latency, decides the
        // ordering.
        r.decode_tokens = 0;
        ParallelismConfig p;
        p.tp = tp;
        PredictionResult res = predict_inference(sys, m, r, p);
        double t = 0;
        for (const auto& [label, sec] : res.breakdown.components)
          if (label.find("comm.") != std::string::npos) t += sec;
        return t;
      };
      const double ring8 = comm_time("systems/topo-ring-8x.conf", 8);
      const double mesh8 = comm_time("systems/topo-mesh-8x.conf", 8);
      const double fc16 = comm_time("systems/topo-fc-16x.conf", 16);
      const double sw16 = comm_time("systems/topo-switch-16x.conf", 16);
      const double ring16 = comm_time("systems/topo-ring-16x.conf", 16);
      const double mesh16 = comm_time("systems/topo-mesh-16x.conf", 16);
      const bool order = fc16 < sw16 && sw16 < ring16 && ring16 < mesh16;
      const bool widens = (mesh16 - ring16) > (mesh8 - ring8);
      c.pass = order && widens;
      c.detail = detail::sfmt(
          "comm time @16 (ms): fc %.3f < switch %.3f < ring %.3f < mesh %.3f "
          "(%s); ring/mesh gap 8->16: %.3f -> %.3f ms (widens: %s)",
          fc16 * 1e3, sw16 * 1e3, ring16 * 1e3, mesh16 * 1e3,
          order ? "yes" : "NO", (mesh8 - ring8) * 1e3,
          (mesh16 - ring16) * 1e3, widens ? "yes" : "NO");
    } catch (const std::exception& e) {
      c.detail = std::string("error: ") + e.what();
    }
    return c;
  }

  // -------------------------------------------------------------------------
  // 7. Large dense training anchor.
  // -------------------------------------------------------------------------
  CheckResult check_training_anchor() {
    CheckResult c{"07.training-anchor", "anchor", false, ""};
    try {
      SystemSpec sys = system("systems/a100-80gb-256x.conf");
      ModelConfig m = model("models/megatron-145b.conf");
      RunConfig r;
      r.phase = Phase::training;
      r.global_batch = 192;
      r.precision = Precision::fp16;
      r.activation_recompute = true;
      ParallelismConfig p;
      p.tp = 8;
      p.dp = 8;
      p.pp = 4;
      p.microbatches = 8;
      PredictionResult res = predict_training(sys, m, r, p);
      const bool in_band = res.model_tflops >= kAnchorTflopsLo &&
                           res.model_tflops <= kAnchorTflopsHi;
      c.pass = in_band && res.memory.fits;
      c.detail = detail::sfmt(
          "iteration %.2f s, %.1f TFLOP/s per device (band [%.0f, %.0f]), "
          "memory %.1f GB of %.1f GB (fits: %s)",
          res.iteration_time, res.model_tflops, kAnchorTflopsLo,
          kAnchorTflopsHi, res.memory.total() / 1e9,
          res.memory.capacity / 1e9, res.memory.fits ? "yes" : "NO");
    } catch (const std::exception& e) {
      c.detail = std::string("error: ") + e.what();
    }
    return c;
  }

  // -------------------------------------------------------------------------
  // 8. Sparse vs dense per-token cost, plus fused attention on top.
  // -------------------------------------------------------------------------
  CheckResult check_moe_vs_dense() {
    CheckResult c{"08.moe-vs-dense", "anchor", false, ""};
    try {
      SystemSpec sys = system("systems/a100-80gb-256x.conf");

      ModelConfig meg = model("models/megatron-145b.conf");
      RunConfig rm;
      rm.phase = Phase::training;
      rm.global_batch = 192;
      rm.precision = Precision::fp16;
      rm.activation_recompute = true;
      ParallelismConfig pm;
      pm.tp = 8;
      pm.dp = 8;
      pm.pp = 4;
      pm.microbatches = 8;
      const double pt_meg =
          predict_training(sys, meg, rm, pm).iteration_time /
          (192.0 * meg.context_length);

      ModelConfig moe = model("models/moe-139b.conf");
      RunConfig ro;
      ro.phase = Phase::training;
      ro.global_batch = 512;
      ro.precision = Precision::fp16;
      ro.activation_recompute = true;
      ParallelismConfig po;
      po.tp = 8;
      po.dp = 32;
      po.ep = 32;
      po.dp_exp = 1;
      const double pt_moe =
          predict_training(sys, moe, ro, po).iteration_time /
          (512.0 * moe.context_length);
      ro.flash_attention = true;
      const double pt_moe_fa =
          predict_training(sys, moe, ro, po).iteration_time /
          (512.0 * moe.context_length);

      const double ratio = pt_meg / pt_moe;
      const double further = pt_moe / pt_moe_fa;
      c.pass = ratio >= kMoeRatioLo && ratio <= kMoeRatioHi &&
               further >= kMoeFlashLo && further <= kMoeFlashHi;
      c.detail = detail::sfmt(
          "per-token %.2f us (dense) vs %.2f us (sparse): ratio %.2fx "
          "(band [%.1f, %.1f]); fused attention adds %.3fx (band "
          "[%.2f, %.2f])",
          pt_meg * 1e6, pt_moe * 1e6, ratio, kMoeRatioLo, kMoeRatioHi,
          further, kMoeFlashLo, kMoeFlashHi);
    } catch (const std::exception& e) {
      c.detail = std::string("error: ") + e.what();
    }
    return c;
  }

  // -------------------------------------------------------------------------
  // 9. Closed-form substitution identities.
  // -------------------------------------------------------------------------
  CheckResult check_closed_forms() {
    CheckResult c{"09.closed-forms", "equations", false, ""};
    try {
      bool ok = true;
      std::string fail;

      // Routed-exchange time: E*C*D*precision / BW, bit-for-bit.
      {
        const double t =
            all_to_all_time(32, 1024, 5120, Precision::fp16, 24e9).seconds();
        const double want = 32.0 * 1024.0 * 5120.0 * 2.0 / 24e9;
        if (t != want) { ok = false; fail += "a2a "; }
      }
      // Point-to-point delay: d/b + l*h + switch, bit-for-bit.
      {
        CommTime t = p2p_delay(1e9, 150e9, 2, 5e-6, 2e-6);
        const double want = 1e9 / 150e9 + 5e-6 * 2 + 2e-6;
        if (t.seconds() != want) { ok = false; fail += "p2p "; }
      }
      // Package cost identity and 1/Y linearity.
      {
        cost::TechLibrary lib;
        lib.process["p"] = {1.0, 0.0, 2.0, 0.0};
        lib.assembly["a"] = {5.0, 0.0, 0.0, 1.0};
        lib.substrate["s"] = {0.0, 1.0};
        cost::PackageSpec pkg;
        pkg.name = "one-die";
        cost::ChipletSpec die;
        die.name = "die";
        die.core_area_mm2 = 100.0;
        die.process_node = "p";
        pkg.chiplets.push_back(die);
        pkg.assembly_process = "a";
        pkg.substrate = "s";
        cost::CostReport rep = cost::system_cost(pkg, lib);
        if (rep.total != 105.0) { ok = false; fail += "eq5-identity "; }
        lib.assembly["a"].assembly_yield = 0.5;
        cost::CostReport rep2 = cost::system_cost(pkg, lib);
        if (rep2.total != 2.0 * rep.total) { ok = false; fail += "eq5-linearity "; }
      }
      // Clustered-defect yield: Poisson limit and direct evaluation.
      {
        const double poisson = std::exp(-826.0 * 0.001);
        if (std::abs(cost::die_yield(826, 0.001, 1e6) - poisson) > 1e-6) {
          ok = false;
          fail += "poisson-limit ";
        }
        if (std::abs(cost::die_yield(826, 0.001, 2) - 0.5006) > 1e-3) {
          ok = false;
          fail += "yield-example ";
        }
        if (cost::die_yield(0, 0.01, 2) != 1.0) { ok = false; fail += "zero-area "; }
      }
      c.pass = ok;
      c.detail = ok ? "routed-exchange, p2p, package-cost identities exact; "
                      "yield Poisson limit within 1e-6"
                    : "failed: " + fail;
    } catch (const std::exception& e) {
      c.detail = std::string("error: ") + e.what();
    }
    return c;
  }

  // -------------------------------------------------------------------------
  // 10. Cost/performance design point (ordinal).
  // -------------------------------------------------------------------------

  // Scale an accelerator to a design variant: memory stacks set capacity and
  // off-chip bandwidth; a logic-die shrink scales compute throughput and
  // on-chip bandwidth together.
  static SystemSpec hbm_variant(SystemSpec sys, int stacks,
                                double logic_scale) {
    AcceleratorSpec& a = sys.accelerator;
    const int base = a.phys.hbm_stacks;
    if (base <= 0)
      throw ConfigError("hbm_variant: accelerator preset lacks stack count");
    const double f = static_cast<double>(stacks) / base;
    a.levels.front().capacity_bytes *= f;
    a.levels.front().bandwidth_Bps *= f;
    for (size_t i = 1; i < a.levels.size(); ++i)
      a.levels[i].bandwidth_Bps *= logic_scale;
    for (auto& [prec, v] : a.peak_flops) v *= logic_scale;
    a.phys.hbm_stacks = stacks;
    a.validate();
    return sys;
  }

  CheckResult check_cost_design_point() {
    CheckResult c{"10.cost-design-point", "cost", false, ""};
    try {
      cost::TechLibrary lib = cost::load_tech_library(tree("cost/backend-7nm.conf"));
      SystemSpec base_sys = system("systems/a100-40gb-1024x.conf");
      ModelConfig m175 = model("models/gpt3-175b.conf");

      struct Variant {
        const char* name;
        int stacks;
        double scale;
      };
      const std::vector<Variant> variants = {
          {"A100-4HBMs", 4, 1.0},  {"A100-5HBMs", 5, 1.0},
          {"A100-6HBMs", 6, 1.0},  {"A100-8HBMs", 8, 1.0},
          {"HA100-3HBMs", 3, 0.5}, {"HA100-4HBMs", 4, 0.5},
          {"HA100-6HBMs", 6, 0.5},
      };
      const int baseline = 1;  // A100-5HBMs

      std::vector<double> cost_of, train_of, infer_of;
      std::vector<bool> feasible_of;
      for (const auto& v : variants) {
        SystemSpec sys = hbm_variant(base_sys, v.stacks, v.scale);
        cost::CostOverrides ov;
        ov.hbm_stacks = v.stacks;
        ov.logic_die_scale = v.scale;
        cost_of.push_back(
            cost::system_cost(cost::export_cost_inputs(sys, ov), lib).total);

        RunConfig rt;
        rt.phase = Phase::training;
        rt.global_batch = 512;
        rt.precision = Precision::fp16;
        rt.activation_recompute = true;
        ParallelismConfig pt;
        pt.tp = 8;
        pt.pp = 16;
        pt.dp = 8;
        pt.microbatches = 16;
        PredictionResult train = predict_training(sys, m175, rt, pt);
        train_of.push_back(train.iteration_time);

        RunConfig ri;
        ri.phase = Phase::inference_prefill;
        ri.global_batch = 128;
        ri.precision = Precision::fp8;
        ri.decode_tokens = 128;
        ri.requests = 1e9;
        ParallelismConfig pi;
        pi.tp = 8;
        pi.dp = 128;
        PredictionResult inf = predict_inference(sys, m175, ri, pi);
        infer_of.push_back(inf.serving_time);
        feasible_of.push_back(train.feasible && inf.feasible);
      }

      // (a) cost strictly increasing in stack count at fixed logic die.
      bool inc = cost_of[0] < cost_of[1] && cost_of[1] < cost_of[2] &&
                 cost_of[2] < cost_of[3];
      // (b) halved die cheaper at equal stack count.
      bool halved = cost_of[5] < cost_of[0] && cost_of[6] < cost_of[2];
      // (c) balanced-weight metric x cost product minimized by the baseline.
      // Design points that cannot hold the training or serving working set
      // can't run the deployment at all, so they are out of the running.
      int best = -1;
      double best_prod = 0;
      std::vector<double> prods(variants.size(), 0.0);
      for (size_t i = 0; i < variants.size(); ++i) {
        if (!feasible_of[i]) continue;
        const double metric =
            combined_metric(train_of[i], infer_of[i], train_of[baseline],
                            infer_of[baseline], 0.5);
        const double prod = metric * cost_of[i] / cost_of[baseline];
        prods[i] = prod;
        if (best < 0 || prod < best_prod) {
          best = static_cast<int>(i);
          best_prod = prod;
        }
      }
      c.pass = inc && halved && best == baseline;
      std::string pstr;
      for (size_t i = 0; i < variants.size(); ++i) {
        if (feasible_of[i])
          pstr += detail::sfmt("%s %.3f  ", variants[i].name, prods[i]);
        else
          pstr += detail::sfmt("%s oom  ", variants[i].name);
      }
      c.detail = detail::sfmt(
          "cost increasing in stacks: %s; halved die cheaper: %s; "
          "metric*cost products (baseline=1, oom = working set exceeds "
          "memory): %sbest=%s",
          inc ? "yes" : "NO", halved ? "yes" : "NO", pstr.c_str(),
          best >= 0 ? variants[static_cast<size_t>(best)].name : "none");
    } catch (const std::exception& e) {
      c.detail = std::string("error: ") + e.what();
    }
    return c;
  }

  // -------------------------------------------------------------------------
  // 11. Conservation and validity sweep.
  // -------------------------------------------------------------------------
  CheckResult check_conservation() {
    CheckResult c{"11.conservation", "conservation", false, ""};
    try {
      std::mt19937 rng(12345);
      auto pick = [&](std::initializer_list<long long> xs) {
        std::vector<long long> v(xs);
        return v[rng() % v.size()];
      };
      bool ok = true;
      std::string fail;

      // (a) shard dimensions reassemble the workload exactly.
      for (int it = 0; it < 200 && ok; ++it) {
        ModelConfig m;
        m.hidden_dim = pick({512, 768, 1024, 2048});
        m.num_heads = m.hidden_dim / 64;
        m.kv_heads = m.num_heads;
        m.head_dim = 64;
        m.num_layers = pick({2, 4, 8});
        m.ffn_dim = 4 * m.hidden_dim;
        m.vocab_size = 32000;
        m.context_length = pick({512, 1024, 2048});
        ParallelismConfig p;
        p.tp = static_cast<int>(pick({1, 2, 4}));
        p.dp = static_cast<int>(pick({1, 2, 4}));
        p.pp = static_cast<int>(pick({1, 2}));
        p.sp = p.tp;
        RunConfig r;
        r.global_batch = p.dp * pick({1, 2, 4});
        if (m.num_heads % p.tp || m.num_layers % p.pp) continue;
        DeviceShard s = shard_workload(p, m, r);
        ok = ok && s.heads_local * p.tp == m.num_heads &&
             s.ffn_cols_local * p.tp == m.ffn_dim &&
             s.layers_per_stage * p.pp == m.num_layers &&
             s.batch_local * p.dp == r.global_batch &&
             s.seq_local * p.sp == m.context_length;
        if (!ok) fail += "shard-reassembly ";
      }

      // (b) expert-group identity fuzzing: accept iff ep*dp_exp == dp.
      {
        int mism = 0;
        for (int it = 0; it < 500; ++it) {
          ModelConfig m;
          m.hidden_dim = 1024;
          m.num_heads = 16;
          m.kv_heads = 16;
          m.head_dim = 64;
          m.num_layers = 4;
          m.ffn_dim = 4096;
          m.vocab_size = 32000;
          m.context_length = 512;
          MoEConfig e;
          e.num_experts = 16;
          e.top_k = 1;
          e.capacity_factor = 1.0;
          m.moe = e;
          ParallelismConfig p;
          p.tp = static_cast<int>(pick({1, 2, 4}));
          p.dp = static_cast<int>(pick({1, 2, 4, 8, 16}));
          p.ep = static_cast<int>(pick({1, 2, 4, 8, 16}));
          p.dp_exp = static_cast<int>(pick({1, 2}));
          RunConfig r;
          r.global_batch = p.dp;
          SystemSpec sys;
          sys.accelerator = synth_accelerator();
          NetworkTopology t;
          t.kind = TopologyKind::switched;
          t.size = static_cast<int>(p.devices());
          t.link_bandwidth_Bps = 100e9;
          sys.levels.push_back(t);
          // Mirror the validator's defaulting: an unspecified expert split
          // rides the data-parallel extent.
          const long long ep_eff =
              (p.ep == 1 && p.dp_exp == 1 && p.dp > 1) ? p.dp : p.ep;
          const bool expect = ep_eff * p.dp_exp == p.dp &&
                              e.num_experts % ep_eff == 0;
          bool accepted = true;
          try {
            validate_parallelism(p, sys, m, r);
          } catch (const ValidationError&) {
            accepted = false;
          }
          if (accepted != expect) ++mism;
        }
        if (mism != 0) {
          ok = false;
          fail += detail::sfmt("expert-identity(%d) ", mism);
        }
      }

      // (c) pipeline bubble formula vs slot enumeration: schedule every
      // microbatch on every stage (stage s runs microbatch i in slot i + s,
      // the earliest slot with its input available), then read makespan and
      // idle share off the occupancy grid.
      for (long long m = 1; m <= 8 && ok; ++m) {
        for (long long p = 1; p <= 8 && ok; ++p) {
          std::vector<std::vector<char>> busy(
              static_cast<size_t>(p),
              std::vector<char>(static_cast<size_t>(m + p), 0));
          long long makespan = 0;
          for (long long s = 0; s < p; ++s)
            for (long long i = 0; i < m; ++i) {
              busy[static_cast<size_t>(s)][static_cast<size_t>(i + s)] = 1;
              makespan = std::max(makespan, i + s + 1);
            }
          long long idle = 0;
          for (long long s = 0; s < p; ++s)
            for (long long t2 = 0; t2 < makespan; ++t2)
              idle += busy[static_cast<size_t>(s)][static_cast<size_t>(t2)] ? 0 : 1;
          const double bubble = static_cast<double>(idle) /
                                static_cast<double>(p * makespan);
          PipelineTime t = pipeline_time(1.0, m, p, PipelineSchedule::gpipe);
          ok = ok && t.total_seconds == static_cast<double>(makespan) &&
               std::abs(t.bubble_fraction - bubble) <= 1e-15;
          if (!ok) fail += "pipeline-enum ";
        }
      }

      // (d) achieved throughput never exceeds peak over random configs.
      {
        int tested = 0;
        for (int it = 0; it < 4000 && tested < 1000; ++it) {
          ModelConfig m;
          m.hidden_dim = pick({512, 1024, 2048});
          m.num_heads = m.hidden_dim / 64;
          m.kv_heads = m.num_heads;
          m.head_dim = 64;
          m.num_layers = pick({2, 4, 8});
          m.ffn_dim = 4 * m.hidden_dim;
          m.vocab_size = static_cast<long long>(pick({32000, 50304}));
          m.context_length = pick({512, 1024});
          ParallelismConfig p;
          p.tp = static_cast<int>(pick({1, 2, 4}));
          p.dp = static_cast<int>(pick({1, 2, 4}));
          p.pp = static_cast<int>(pick({1, 2}));
          p.microbatches = static_cast<int>(pick({1, 2}));
          RunConfig r;
          r.global_batch = p.dp * p.microbatches * pick({1, 2});
          r.precision = rng() % 2 ? Precision::fp16 : Precision::fp32;
          r.flash_attention = rng() % 2;
          r.activation_recompute = rng() % 2;
          r.phase = rng() % 4 ? Phase::training : Phase::inference_prefill;
          r.decode_tokens = is_inference(r.phase) ? 16 : 0;
          SystemSpec sys;
          sys.accelerator = synth_accelerator();
          NetworkTopology t;
          t.kind = TopologyKind::switched;
          t.size = static_cast<int>(p.devices());
          t.link_bandwidth_Bps = 150e9;
          t.link_latency_s = 0.5e-6;
          t.switch_delay_s = 0.5e-6;
          sys.levels.push_back(t);
          try {
            PredictionResult res = predict(sys, m, r, p);
            ++tested;
            ok = ok && res.mfu > 0 && res.mfu <= 1.0 + 1e-12;
            double sum = 0;
            for (const auto& [label, sec] : res.breakdown.components) {
              ok = ok && sec >= 0;
              sum += sec;
            }
            const double head = is_inference(r.phase)
                                    ? res.latency
                                    : res.iteration_time;
            // The breakdown must sum to the headline time exactly (same
            // additions, same order).
            ok = ok && std::abs(sum - head) <= 1e-9 * std::max(1.0, head);
            if (!ok) {
              fail += "random-validity ";
              break;
            }
          } catch (const ConfigError&) {
          } catch (const ValidationError&) {
          }
        }
        if (tested < 1000) {
          ok = false;
          fail += detail::sfmt("only-%d-configs ", tested);
        }
      }

      c.pass = ok;
      c.detail =
          ok ? "shard reassembly exact (200 draws); expert-identity fuzz "
               "(500 draws, 0 mismatches); bubble formula == slot "
               "enumeration on [1,8]^2; 1000 random configs: mfu in (0,1], "
               "breakdown sums exact"
             : "failed: " + fail;
    } catch (const std::exception& e) {
      c.detail = std::string("error: ") + e.what();
    }
    return c;
  }

  static AcceleratorSpec synth_accelerator() {
    AcceleratorSpec a;
    a.name = "synthetic";
    a.peak_flops[Precision::fp32] = 19.5e12;
    a.peak_flops[Precision::fp16] = 312e12;
    a.peak_flops[Precision::fp8] = 624e12;
    a.levels = {{"hbm", 40e9, 1.555e12},
                {"l2", 40e6, 5e12},
                {"sram", 20e6, 19.5e12}};
    a.offchip_bandwidth_Bps = 300e9;
    return a;
  }
};

inline std::vector<CheckResult> run_acceptance(const std::string& preset_dir,
                                               const std::string& only = "") {
  Acceptance a(preset_dir);
  return a.run(only);
}

}  // namespace llmpc::validation
