// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// llmpc command-line front end.
//
//   llmpc predict  --config <path> [--flash-attention on|off] [--out <dir>]
//   llmpc sweep    --config <path> --axis key=v1,v2,... [--jobs N]
//   llmpc validate [--only <suite>]
//
// `predict` exits 0 when the configuration is feasible, 2 when the modeled
// memory footprint does not fit. `sweep` writes one CSV row per design
// point to stdout; rows are byte-stable across runs and job counts, and
// infeasible points become rows, not failures.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "llmpc/llmpc.hpp"

namespace {

struct LoadedCase {
  llmpc::SystemSpec sys;
  llmpc::ModelConfig model;
  llmpc::RunConfig run;
  llmpc::ParallelismConfig par;
  std::string fingerprint;
};

LoadedCase load_case(const llmpc::KvTree& kv) {
  LoadedCase c;
  c.sys = llmpc::load_system(kv);
  c.model = llmpc::load_model(kv);
  c.run = llmpc::load_run(kv);
  c.par = llmpc::load_parallelism(kv);
  c.fingerprint = kv.fingerprint();
  return c;
}

std::string num_cell(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

int run_predict(const std::string& config, const std::string& flash,
                const std::string& out_dir) {
  llmpc::KvTree kv = llmpc::KvTree::from_file(config);
  if (!flash.empty()) kv.set("run.flash_attention", flash);
  LoadedCase c = load_case(kv);
  llmpc::PredictionResult res = llmpc::predict(c.sys, c.model, c.run, c.par);

  std::printf("config      %s (fingerprint %s)\n", config.c_str(),
              c.fingerprint.c_str());
  std::printf("phase       %s\n", llmpc::to_string(c.run.phase));
  std::printf("devices     %lld (dp=%lld tp=%lld pp=%lld)\n",
              c.sys.total_devices(), c.par.dp, c.par.tp, c.par.pp);
  if (llmpc::is_inference(c.run.phase)) {
    std::printf("prefill     %.6f s\n", res.prefill_time);
    if (c.run.decode_tokens > 0) {
      std::printf("decode step %.6f s\n", res.decode_step_time);
      std::printf("latency     %.6f s (%lld generated tokens)\n", res.latency,
                  c.run.decode_tokens);
      std::printf("throughput  %.1f tokens/s\n", res.throughput_tokens_s);
    }
    if (c.run.requests > 0)
      std::printf("serving     %.3e s for %.3g requests on %lld replicas\n",
                  res.serving_time, c.run.requests, res.replicas);
  } else {
    std::printf("iteration   %.6f s\n", res.iteration_time);
    if (res.iterations_per_epoch > 0)
      std::printf("epoch       %.3e s (%lld iterations)\n", res.epoch_time,
                  res.iterations_per_epoch);
    std::printf("bubble      %.4f\n", res.pipeline_bubble_fraction);
  }
  std::printf("tflops      %.1f per device (mfu %.3f)\n", res.model_tflops,
              res.mfu);
  std::printf("memory      %.2f GB of %.2f GB%s\n", res.memory.total() / 1e9,
              res.memory.capacity / 1e9,
              res.memory.fits ? "" : "  ** does not fit **");
  std::printf("\n%-28s %14s %8s  %s\n", "component", "seconds", "share",
              "bound by");
  const double total = res.breakdown.total();
  for (const auto& [label, sec] : res.breakdown.components) {
    auto it = res.breakdown.bound_tags.find(label);
    std::printf("%-28s %14.6e %7.2f%%  %s\n", label.c_str(), sec,
                total > 0 ? 100.0 * sec / total : 0.0,
                it != res.breakdown.bound_tags.end() ? it->second.c_str() : "");
  }
  for (const auto& n : res.notes) std::printf("note: %s\n", n.c_str());

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    nlohmann::json report = llmpc::prediction_report(res, c.sys, c.model,
                                                     c.run, c.par,
                                                     c.fingerprint);
    std::ofstream js(out_dir + "/report.json");
    js << report.dump(2) << "\n";
    std::ofstream cs(out_dir + "/breakdown.csv");
    cs << "fingerprint,component,seconds,share,bound_by\n";
    for (const auto& [label, sec] : res.breakdown.components) {
      auto it = res.breakdown.bound_tags.find(label);
      cs << c.fingerprint << ',' << label << ',' << num_cell(sec) << ','
         << num_cell(total > 0 ? sec / total : 0.0) << ','
         << (it != res.breakdown.bound_tags.end() ? it->second : "") << '\n';
    }
    std::printf("\nwrote %s/report.json and %s/breakdown.csv\n",
                out_dir.c_str(), out_dir.c_str());
  }
  return res.feasible ? 0 : 2;
}

struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

SweepAxis parse_axis(const std::string& spec) {
  auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw llmpc::ConfigError("--axis expects key=v1,v2,... (got '" + spec +
                             "')");
  SweepAxis a;
  a.key = spec.substr(0, eq);
  std::string rest = spec.substr(eq + 1);
  size_t start = 0;
  while (start <= rest.size()) {
    size_t comma = rest.find(',', start);
    if (comma == std::string::npos) comma = rest.size();
    if (comma > start) a.values.push_back(rest.substr(start, comma - start));
    start = comma + 1;
  }
  if (a.values.empty())
    throw llmpc::ConfigError("--axis '" + a.key + "' has no values");
  return a;
}

int run_sweep(const std::string& config, const std::vector<std::string>& axis_specs,
              int jobs) {
  std::vector<SweepAxis> axes;
  for (const auto& s : axis_specs) axes.push_back(parse_axis(s));
  if (jobs < 1) jobs = 1;

  // Cartesian product, first axis outermost; the enumeration order is the
  // output order no matter how many worker threads run the points.
  size_t n_points = 1;
  for (const auto& a : axes) n_points *= a.values.size();

  const llmpc::KvTree base = llmpc::KvTree::from_file(config);
  std::vector<std::string> rows(n_points);

  auto point_values = [&](size_t idx) {
    std::vector<std::string> vals(axes.size());
    for (size_t k = axes.size(); k-- > 0;) {
      vals[k] = axes[k].values[idx % axes[k].values.size()];
      idx /= axes[k].values.size();
    }
    return vals;
  };

  auto run_point = [&](size_t idx) {
    std::vector<std::string> vals = point_values(idx);
    llmpc::KvTree kv = base;
    for (size_t k = 0; k < axes.size(); ++k) kv.set(axes[k].key, vals[k]);
    std::ostringstream row;
    row << kv.fingerprint();
    for (const auto& v : vals) row << ',' << v;
    try {
      LoadedCase c = load_case(kv);
      llmpc::PredictionResult res = llmpc::predict(c.sys, c.model, c.run, c.par);
      row << ',' << (res.feasible ? "ok" : "oom") << ','
          << num_cell(res.iteration_time) << ',' << num_cell(res.model_tflops)
          << ',' << num_cell(res.mfu) << ','
          << num_cell(res.pipeline_bubble_fraction) << ','
          << num_cell(res.memory.total()) << ','
          << num_cell(res.serving_time) << ',';
    } catch (const std::exception& e) {
      std::string what = e.what();
      for (auto& ch : what)
        if (ch == ',' || ch == '\n') ch = ';';
      row << ",invalid,,,,,,," << what;
    }
    rows[idx] = row.str();
  };

  if (jobs == 1) {
    for (size_t i = 0; i < n_points; ++i) run_point(i);
  } else {
    std::vector<std::thread> pool;
    std::mutex next_mu;
    size_t next = 0;
    for (int t = 0; t < jobs; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          size_t i;
          {
            std::lock_guard<std::mutex> g(next_mu);
            if (next >= n_points) return;
            i = next++;
          }
          run_point(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  std::ostringstream head;
  head << "fingerprint";
  for (const auto& a : axes) head << ',' << a.key;
  head << ",status,time_s,model_tflops,mfu,bubble_fraction,memory_total_B,"
          "serving_time_s,note";
  std::cout << head.str() << '\n';
  for (const auto& r : rows) std::cout << r << '\n';
  return 0;
}

int run_validate(const std::string& only) {
  auto results =
      llmpc::validation::run_acceptance(llmpc::KvTree::default_preset_dir(),
                                        only);
  if (results.empty()) {
    std::fprintf(stderr, "no checks match suite '%s'\n", only.c_str());
    return 1;
  }
  int failed = 0;
  for (const auto& r : results) {
    std::printf("[%s] %s: %s\n", r.pass ? "PASS" : "FAIL", r.id.c_str(),
                r.detail.c_str());
    if (!r.pass) ++failed;
  }
  std::printf("%zu checks, %d failed\n", results.size(), failed);
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"analytical performance and cost model for large-scale "
               "transformer training and inference"};
  app.set_version_flag("--version", LLMPC_VERSION_STRING);
  app.require_subcommand(1);

  std::string config, flash, out_dir, only;
  std::vector<std::string> axis_specs;
  int jobs = 1;

  CLI::App* predict = app.add_subcommand("predict", "model one configuration");
  predict->add_option("--config", config, "case configuration file")
      ->required();
  predict->add_option("--flash-attention", flash,
                      "override the attention implementation (on|off)")
      ->check(CLI::IsMember({"on", "off"}));
  predict->add_option("--out", out_dir, "directory for report.json and breakdown.csv");

  CLI::App* sweep = app.add_subcommand("sweep", "model a grid of configurations");
  sweep->add_option("--config", config, "base case configuration file")
      ->required();
  sweep->add_option("--axis", axis_specs,
                    "axis to vary, key=v1,v2,... (repeatable; first axis "
                    "outermost)")
      ->required();
  sweep->add_option("--jobs", jobs, "worker threads");

  CLI::App* validate =
      app.add_subcommand("validate", "run the acceptance checks");
  validate->add_option("--only", only,
                       "run a single suite (flash, batch, tp, moe, network, "
                       "anchor, equations, cost, conservation)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (predict->parsed()) return run_predict(config, flash, out_dir);
    if (sweep->parsed()) return run_sweep(config, axis_specs, jobs);
    return run_validate(only);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
