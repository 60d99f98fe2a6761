// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance harness: replays the published measurement suite and the
// independent-oracle checks end to end, printing one line per criterion.

#include <llmpc/validation.hpp>

#include <cstdio>
#include <string>

int main(int argc, char** argv) {
  std::string only;
  if (argc > 1) only = argv[1];

  const auto results = llmpc::validation::run_acceptance(
      llmpc::KvTree::default_preset_dir(), only);
  if (results.empty()) {
    std::fprintf(stderr, "no checks matched '%s'\n", only.c_str());
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
