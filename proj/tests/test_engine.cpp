// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include <llmpc/engine.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace llmpc;

namespace {

SystemSpec make_sys(int devices) {
  SystemSpec sys;
  sys.accelerator.name = "test-acc";
  sys.accelerator.peak_flops[Precision::fp32] = 19.5e12;
  sys.accelerator.peak_flops[Precision::fp16] = 312e12;
  sys.accelerator.peak_flops[Precision::fp8] = 624e12;
  sys.accelerator.levels = {
      {"hbm", 40e9, 1.555e12}, {"l2", 40e6, 5e12}, {"sram", 20e6, 19.5e12}};
  sys.accelerator.offchip_bandwidth_Bps = 300e9;
  NetworkTopology t;
  t.kind = TopologyKind::switched;
  t.size = devices;
  t.link_bandwidth_Bps = 300e9;
  t.link_latency_s = 0.5e-6;
  t.switch_delay_s = 0.5e-6;
  sys.levels = {t};
  return sys;
}

ModelConfig make_model() {
  ModelConfig m;
  m.num_layers = 12;
  m.hidden_dim = 768;
  m.num_heads = 12;
  m.kv_heads = 12;
  m.head_dim = 64;
  m.ffn_dim = 3072;
  m.vocab_size = 50257;
  m.context_length = 1024;
  return m;
}

RunConfig train_run(long long batch = 32) {
  RunConfig r;
  r.phase = Phase::training;
  r.global_batch = batch;
  r.precision = Precision::fp16;
  return r;
}

ParallelismConfig par8() {
  return ParallelismConfig{.dp = 8, .tp = 1, .pp = 1, .sp = 1, .ep = 1,
                           .dp_exp = 1, .microbatches = 1};
}

}  // namespace

TEST_CASE("training: headline time is exactly the component sum") {
  auto sys = make_sys(8);
  auto res = predict(sys, make_model(), train_run(), par8());
  REQUIRE(res.feasible);
  CHECK(res.iteration_time == res.breakdown.total());
  CHECK(res.iteration_time > 0);
  for (const auto& [label, seconds] : res.breakdown.components) {
    INFO(label);
    CHECK(seconds >= 0);
  }
}

TEST_CASE("training: utilization stays within physical bounds") {
  auto sys = make_sys(8);
  for (bool recompute : {false, true}) {
    for (bool flash : {false, true}) {
      auto run = train_run();
      run.activation_recompute = recompute;
      run.flash_attention = flash;
      auto res = predict(sys, make_model(), run, par8());
      INFO("recompute=" << recompute << " flash=" << flash);
      CHECK(res.mfu > 0);
      CHECK(res.mfu <= 1.0);
      CHECK(res.model_tflops * 1e12 <=
            sys.accelerator.peak(Precision::fp16) * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("training: epoch bookkeeping follows the token budget") {
  auto sys = make_sys(8);
  auto run = train_run(32);
  run.tokens_to_train = 1e9;
  auto res = predict(sys, make_model(), run, par8());
  long long tokens_per_iter = 32 * 1024;
  CHECK(res.iterations_per_epoch ==
        static_cast<long long>(std::ceil(1e9 / tokens_per_iter)));
  CHECK(res.epoch_time ==
        Catch::Approx(res.iteration_time * res.iterations_per_epoch));
}

TEST_CASE("training: fused attention never slows an iteration down") {
  auto sys = make_sys(8);
  auto base = train_run();
  auto fused = base;
  fused.flash_attention = true;
  double t_base = predict(sys, make_model(), base, par8()).iteration_time;
  double t_fused = predict(sys, make_model(), fused, par8()).iteration_time;
  CHECK(t_fused <= t_base * (1.0 + 1e-12));
}

TEST_CASE("training: recompute costs time and saves activation memory") {
  auto sys = make_sys(8);
  auto base = train_run();
  auto ckpt = base;
  ckpt.activation_recompute = true;
  auto r_base = predict(sys, make_model(), base, par8());
  auto r_ckpt = predict(sys, make_model(), ckpt, par8());
  CHECK(r_ckpt.iteration_time > r_base.iteration_time);
  CHECK(r_ckpt.memory.activations < r_base.memory.activations);
}

TEST_CASE("training: data parallelism pays its gradient reduction") {
  auto sys1 = make_sys(1);
  ParallelismConfig solo{.dp = 1, .tp = 1, .pp = 1, .sp = 1, .ep = 1,
                         .dp_exp = 1, .microbatches = 1};
  auto r1 = predict(sys1, make_model(), train_run(4), solo);
  CHECK(r1.breakdown.get("comm.dp_allreduce") == 0);

  auto sys8 = make_sys(8);
  auto r8 = predict(sys8, make_model(), train_run(32), par8());
  CHECK(r8.breakdown.get("comm.dp_allreduce") > 0);
}

TEST_CASE("training: pipeline stages report their fill-drain bubble") {
  auto sys = make_sys(8);
  ParallelismConfig pipe{.dp = 2, .tp = 1, .pp = 4, .sp = 1, .ep = 1,
                         .dp_exp = 1, .microbatches = 8};
  auto res = predict(sys, make_model(), train_run(32), pipe);
  CHECK(res.pipeline_bubble_fraction ==
        Catch::Approx(3.0 / (8.0 + 4.0 - 1.0)));
  CHECK(res.breakdown.get("pipeline.bubble") > 0);
  CHECK(res.breakdown.get("comm.pp_p2p") > 0);
}

TEST_CASE("infeasible memory marks the result but still reports time") {
  auto sys = make_sys(8);
  sys.accelerator.levels[0].capacity_bytes = 1e9;  // 1 GB device
  auto res = predict(sys, make_model(), train_run(), par8());
  CHECK_FALSE(res.feasible);
  CHECK_FALSE(res.notes.empty());
  CHECK(res.iteration_time > 0);
}

TEST_CASE("inference: latency composes prefill and decode budget") {
  auto sys = make_sys(8);
  auto model = make_model();
  RunConfig run;
  run.phase = Phase::inference_decode;
  run.global_batch = 8;
  run.precision = Precision::fp16;
  run.decode_tokens = 64;
  run.requests = 1e6;
  ParallelismConfig p{.dp = 2, .tp = 4, .pp = 1, .sp = 1, .ep = 1,
                      .dp_exp = 1, .microbatches = 1};
  auto res = predict(sys, model, run, p);
  REQUIRE(res.feasible);
  CHECK(res.latency ==
        Catch::Approx(res.prefill_time + 64.0 * res.decode_step_time));
  CHECK(res.breakdown.total() == Catch::Approx(res.latency));
  CHECK(res.throughput_tokens_s ==
        Catch::Approx(8.0 * 64.0 / res.latency));
  CHECK(res.serving_time > 0);
  CHECK(res.mfu > 0);
  CHECK(res.mfu <= 1.0);
}

TEST_CASE("inference: prefill-only runs carry no decode components") {
  auto sys = make_sys(8);
  RunConfig run;
  run.phase = Phase::inference_prefill;
  run.global_batch = 8;
  run.precision = Precision::fp16;
  run.decode_tokens = 0;
  ParallelismConfig p{.dp = 2, .tp = 4, .pp = 1, .sp = 1, .ep = 1,
                      .dp_exp = 1, .microbatches = 1};
  auto res = predict(sys, make_model(), run, p);
  CHECK(res.decode_step_time == 0);  // no generation budget, no decode work
  CHECK(res.latency == res.prefill_time);
  for (const auto& [label, seconds] : res.breakdown.components) {
    INFO(label);
    CHECK(label.rfind("decode.", 0) != 0);
    (void)seconds;
  }
}

TEST_CASE("combined metric blends normalized times and validates input") {
  CHECK(combined_metric(2.0, 4.0, 2.0, 4.0, 0.5) == 1.0);
  CHECK(combined_metric(1.0, 4.0, 2.0, 4.0, 1.0) == 0.5);
  CHECK(combined_metric(1.0, 8.0, 2.0, 4.0, 0.0) == 2.0);
  CHECK_THROWS_AS(combined_metric(1, 1, 0, 1, 0.5), ValidationError);
  CHECK_THROWS_AS(combined_metric(1, 1, 1, 1, 1.5), ValidationError);
}

TEST_CASE("report carries fingerprint, structure and no wall-clock state") {
  auto sys = make_sys(8);
  auto model = make_model();
  auto run = train_run();
  auto par = par8();
  auto res = predict(sys, model, run, par);
  auto j = prediction_report(res, sys, model, run, par, "deadbeef01234567");

  CHECK(j["config_fingerprint"] == "deadbeef01234567");
  CHECK(j["schema_version"] == 1);
  CHECK(j["feasible"] == true);
  CHECK(j["time"]["total_s"].get<double>() == res.iteration_time);
  CHECK(j["metrics"]["mfu"].get<double>() == res.mfu);
  CHECK(j["system"]["devices"] == 8);
  CHECK(j["training"]["iteration_s"].get<double>() == res.iteration_time);
  CHECK(j.find("timestamp") == j.end());
  CHECK(j.dump().find("timestamp") == std::string::npos);

  // Identical inputs serialize identically (the report is reproducible).
  auto j2 = prediction_report(predict(sys, model, run, par), sys, model, run,
                              par, "deadbeef01234567");
  CHECK(j.dump() == j2.dump());

  // Component shares sum to one over the headline time.
  double share = 0;
  for (const auto& c : j["time"]["components"]) share += c["share"].get<double>();
  CHECK(share == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("sequence parallelism shards stored activations across the group") {
  auto sys = make_sys(8);
  auto model = make_model();
  auto run = train_run();
  ParallelismConfig flat{.dp = 2, .tp = 4, .pp = 1, .sp = 1, .ep = 1,
                         .dp_exp = 1, .microbatches = 1};
  ParallelismConfig seq{.dp = 2, .tp = 4, .pp = 1, .sp = 4, .ep = 1,
                        .dp_exp = 1, .microbatches = 1};
  auto a = predict(sys, model, run, flat);
  auto b = predict(sys, model, run, seq);
  CHECK(b.memory.activations < a.memory.activations);
}
