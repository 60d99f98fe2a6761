// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Hierarchical roofline timing for single kernels.
//
// A kernel is a flop count plus a byte count per memory level. Its time is
// the max of the compute term (flops / peak) and each level's transfer term
// (bytes / bandwidth); the argmax names what the kernel is bound by, with
// ties resolved toward compute.
//
// GEMM byte counts come from a square-tiling capacity model evaluated per
// cache level: a t x t output tile with its two t-wide operand panels must
// fit in the level (3 * t^2 elements), and every operand panel is re-read
// once per tile row/column of the other matrix:
//
//   traffic(level above) = (m*k*ceil(n/t) + k*n*ceil(m/t) + 2*m*n) * bytes
//
// The 2*m*n term writes the output once and reads it once for the epilogue.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "llmpc/common.hpp"
#include "llmpc/sysdesc.hpp"

namespace llmpc {

// Cost of exp/max/sub/div bookkeeping per softmax element.
inline constexpr double kSoftmaxFlopsPerElement = 5.0;
// Activation nonlinearity (tanh-form GELU) per element.
inline constexpr double kGeluFlopsPerElement = 8.0;
// Mean/variance/scale/shift per normalized element.
inline constexpr double kLayerNormFlopsPerElement = 5.0;

struct KernelDescriptor {
  std::string name;
  double flops = 0;
  // (memory level name, bytes moved at that level); levels absent here move
  // no modeled traffic.
  std::vector<std::pair<std::string, double>> bytes_per_level;
  Precision precision = Precision::fp16;

  KernelDescriptor() = default;
  KernelDescriptor(std::string n, Precision p) : name(std::move(n)), precision(p) {}

  void add_bytes(const std::string& level, double bytes) {
    for (auto& [lvl, b] : bytes_per_level) {
      if (lvl == level) {
        b += bytes;
        return;
      }
    }
    bytes_per_level.emplace_back(level, bytes);
  }

  double bytes_at(const std::string& level) const {
    for (const auto& [lvl, b] : bytes_per_level)
      if (lvl == level) return b;
    return 0;
  }
};

struct KernelTime {
  double seconds = 0;
  std::string bound_by;  // "compute" or a memory level name
};

inline KernelTime kernel_time(const KernelDescriptor& k, const AcceleratorSpec& acc) {
  if (k.flops < 0) throw ValidationError("kernel '" + k.name + "': negative flops");
  double t = k.flops / acc.peak(k.precision);
  std::string bound = "compute";
  for (const auto& [lvl, bytes] : k.bytes_per_level) {
    if (bytes < 0) throw ValidationError("kernel '" + k.name + "': negative bytes at " + lvl);
    const MemoryLevel* m = acc.find_level(lvl);
    if (!m)
      throw ValidationError("kernel '" + k.name + "': unknown memory level '" + lvl + "'");
    double tl = bytes / m->bandwidth_Bps;
    if (tl > t) {  // strict: ties stay with compute
      t = tl;
      bound = lvl;
    }
  }
  return {t, bound};
}

// Largest square tile whose working set (tile + two operand panels) fits in
// `capacity_bytes`, clamped to the problem extent.
inline double gemm_tile_edge(double capacity_bytes, int bytes_elem, double m, double n, double k) {
  double t = std::floor(std::sqrt(capacity_bytes / (3.0 * bytes_elem)));
  double ext = std::min(m, std::min(n, k));
  return std::max(1.0, std::min(t, ext));
}

inline double gemm_traffic_elems(double m, double n, double k, double t) {
  return m * k * dceil_div(n, t) + k * n * dceil_div(m, t) + 2.0 * m * n;
}

// GEMM of [m x k] * [k x n]. Each inner (cache) level of the hierarchy tiles
// the problem to its own capacity and emits traffic at the level just above
// it; the innermost level itself holds the active tiles and emits none.
inline KernelDescriptor gemm_descriptor(const std::string& name, double m, double n, double k,
                                        Precision prec, const AcceleratorSpec& acc) {
  if (m < 1 || n < 1 || k < 1)
    throw ValidationError("gemm '" + name + "': dimensions must be >= 1");
  KernelDescriptor d;
  d.name = name;
  d.precision = prec;
  d.flops = 2.0 * m * n * k;
  int be = bytes_of(prec);
  for (size_t i = 1; i < acc.levels.size(); ++i) {
    double t = gemm_tile_edge(acc.levels[i].capacity_bytes, be, m, n, k);
    d.add_bytes(acc.levels[i - 1].name, gemm_traffic_elems(m, n, k, t) * be);
  }
  return d;
}

// Elementwise op streaming from the outermost level: one read and one write
// per element.
inline KernelDescriptor pointwise_descriptor(const std::string& name, double elements,
                                             double flops_per_element, Precision prec,
                                             const AcceleratorSpec& acc) {
  if (elements < 0) throw ValidationError("pointwise '" + name + "': negative element count");
  KernelDescriptor d;
  d.name = name;
  d.precision = prec;
  d.flops = elements * flops_per_element;
  d.add_bytes(acc.outermost().name, 2.0 * elements * bytes_of(prec));
  return d;
}

inline KernelTime gemm_time(double m, double n, double k, Precision prec,
                            const AcceleratorSpec& acc, const std::string& name = "gemm") {
  return kernel_time(gemm_descriptor(name, m, n, k, prec, acc), acc);
}

inline KernelTime pointwise_time(double elements, double flops_per_element, Precision prec,
                                 const AcceleratorSpec& acc,
                                 const std::string& name = "pointwise") {
  return kernel_time(pointwise_descriptor(name, elements, flops_per_element, prec, acc), acc);
}

}  // namespace llmpc
