// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Shared enums, error types and small numeric helpers used across llmpc.

#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace llmpc {

// Raised for malformed or unreadable configuration input. The message
// carries a file:line context whenever one is available.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a structurally valid input violates a model constraint
// (divisibility, ordering, unsupported enum value, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Precision { fp32, fp16, fp8 };

inline int bytes_of(Precision p) {
  switch (p) {
    case Precision::fp32: return 4;
    case Precision::fp16: return 2;
    case Precision::fp8: return 1;
  }
  throw ValidationError("unknown precision enum value");
}

inline const char* to_string(Precision p) {
  switch (p) {
    case Precision::fp32: return "fp32";
    case Precision::fp16: return "fp16";
    case Precision::fp8: return "fp8";
  }
  return "?";
}

// bf16 shares storage width and peak throughput with fp16 on every part we
// model, so both spellings map to the same bucket.
inline Precision precision_from_string(const std::string& s) {
  if (s == "fp32" || s == "tf32") return Precision::fp32;
  if (s == "fp16" || s == "bf16") return Precision::fp16;
  if (s == "fp8") return Precision::fp8;
  throw ValidationError("unknown precision '" + s + "' (expected fp32|fp16|bf16|fp8)");
}

enum class Phase { training, inference_prefill, inference_decode };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::training: return "training";
    case Phase::inference_prefill: return "inference_prefill";
    case Phase::inference_decode: return "inference_decode";
  }
  return "?";
}

inline Phase phase_from_string(const std::string& s) {
  if (s == "training") return Phase::training;
  // Plain "inference" means a serving run: prefill plus a decode budget.
  if (s == "inference" || s == "inference_prefill") return Phase::inference_prefill;
  if (s == "inference_decode") return Phase::inference_decode;
  throw ValidationError("unknown phase '" + s + "'");
}

inline bool is_inference(Phase p) { return p != Phase::training; }

inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) {
  return b == 0 ? 0 : (a + b - 1) / b;
}

// ceil for positive double counts (tile counts, capacities).
inline double dceil_div(double a, double b) {
  if (b <= 0) throw ValidationError("ceil_div by non-positive value");
  double q = a / b;
  double f = static_cast<double>(static_cast<long long>(q));
  return (q > f) ? f + 1.0 : f;
}

// FNV-1a, used for config fingerprints. Stable across platforms and runs,
// which keeps sweep CSV output byte-identical.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

// Fixed-format double used everywhere we serialize numbers; enough digits to
// round-trip, no locale dependence.
inline std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::string(buf);
}

}  // namespace llmpc
