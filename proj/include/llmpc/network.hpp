// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Interconnect timing. A single transfer of d bytes over a path of h hops
// with per-link bandwidth b, link latency l and switch delay D_r costs
//
//   D_total = d/b + l*h + D_r     (D_r only when the path crosses a switch)
//
// Collective algorithms decompose into synchronous steps of such transfers;
// a step's wall time is the slowest transfer in it, and devices never
// overlap steps. Costs are reported split into serialization / link-latency
// / switching terms so callers can see what dominates.
//
// Algorithms per topology:
//
//   ring            step-wise ring reduce-scatter + all-gather:
//                   2(p-1) steps of d/p; serialization 2 d (p-1)/(p b)
//   switch          recursive halving/doubling through the switch:
//                   2 log2(p) steps, step i moves d/2^i, two hops each;
//                   non-powers of two fold onto the lower power of two with
//                   one extra exchange on each side
//   fully_connected single-step scatter-reduce + single-step gather: every
//                   device talks to all p-1 peers at once on its own links
//   mesh2d          ring reduce-scatter/all-gather along rows, then columns
//                   with the payload shrunk by the row factor
//
// All-to-all is the expert-dispatch primitive: volume E*C*D*precision per
// device against the measured all-to-all bandwidth (no latency term; the
// measurement already includes it).

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "llmpc/common.hpp"
#include "llmpc/sysdesc.hpp"

namespace llmpc {

struct CommTime {
  double serialization = 0;  // payload/bandwidth terms
  double link = 0;           // hop latency terms
  double switching = 0;      // switch traversal terms
  long long steps = 0;

  double seconds() const { return serialization + link + switching; }

  CommTime& operator+=(const CommTime& o) {
    serialization += o.serialization;
    link += o.link;
    switching += o.switching;
    steps += o.steps;
    return *this;
  }
};

enum class CollectiveKind { all_reduce, reduce_scatter, all_gather, all_to_all, p2p };

struct CollectiveRequest {
  CollectiveKind kind = CollectiveKind::all_reduce;
  double bytes = 0;      // payload per participating device
  int participants = 1;  // may be a subgroup of the topology
  NetworkTopology topology;
};

inline CommTime p2p_delay(double bytes, double bandwidth_Bps, int hops, double link_latency_s,
                          double switch_delay_s) {
  if (bytes < 0) throw ValidationError("p2p: negative payload");
  if (bandwidth_Bps <= 0) throw ValidationError("p2p: bandwidth must be positive");
  if (hops < 1) throw ValidationError("p2p: hop count must be >= 1");
  CommTime t;
  t.serialization = bytes / bandwidth_Bps;
  t.link = link_latency_s * hops;
  t.switching = hops > 1 ? switch_delay_s : 0;
  t.steps = 1;
  return t;
}

inline CommTime p2p_delay(double bytes, const NetworkTopology& topo) {
  return p2p_delay(bytes, topo.link_bandwidth_Bps, hops_per_transfer(topo.kind),
                   topo.link_latency_s, topo.switch_delay_s);
}

namespace detail {

// One synchronous step where the slowest transfer moves `bytes`.
inline CommTime step(double bytes, const NetworkTopology& t) {
  CommTime c;
  c.serialization = bytes / t.link_bandwidth_Bps;
  int h = hops_per_transfer(t.kind);
  c.link = t.link_latency_s * h;
  c.switching = h > 1 ? t.switch_delay_s : 0;
  c.steps = 1;
  return c;
}

inline bool is_pow2(int p) { return p > 0 && (p & (p - 1)) == 0; }

inline int floor_pow2(int p) {
  int q = 1;
  while (q * 2 <= p) q *= 2;
  return q;
}

// Ring reduce-scatter among p participants: p-1 steps, each passing a
// d/p chunk to the neighbor. All-gather is the mirror image.
inline CommTime ring_half(double d, int p, const NetworkTopology& t) {
  CommTime c;
  if (p < 2) return c;
  for (int s = 0; s < p - 1; ++s) c += step(d / p, t);
  return c;
}

// Recursive halving through a switch (reduce-scatter direction): log2(p')
// exchanges, the i-th moving d/2^i. When p is not a power of two, the
// p - p' surplus devices first fold their full vector onto a partner and
// collect the result back at the end; both extras are charged here split
// across the two halves.
inline CommTime switch_half(double d, int p, const NetworkTopology& t) {
  CommTime c;
  if (p < 2) return c;
  int p2 = floor_pow2(p);
  if (p2 != p) c += step(d, t);  // fold surplus devices onto partners
  double chunk = d;
  for (int q = p2; q > 1; q /= 2) {
    chunk /= 2;
    c += step(chunk, t);
  }
  return c;
}

// Mesh reduce-scatter: ring phase along each row (payload d), then along
// each column with the payload already scattered by the row factor.
inline CommTime mesh_half(double d, const NetworkTopology& t) {
  CommTime c;
  c += ring_half(d, t.mesh_cols, t);                 // along a row: mesh_cols devices
  c += ring_half(d / t.mesh_cols, t.mesh_rows, t);   // along a column, payload scattered
  return c;
}

// Single-shot scatter-reduce on an all-to-all wired group: each device
// pushes a distinct d/p slice to every peer simultaneously on p-1 links, so
// the wall time is one d/p transfer.
inline CommTime fc_half(double d, int p, const NetworkTopology& t) {
  CommTime c;
  if (p < 2) return c;
  c += step(d / p, t);
  return c;
}

inline CommTime reduce_scatter_cost(double d, int p, const NetworkTopology& t) {
  switch (t.kind) {
    case TopologyKind::ring: return ring_half(d, p, t);
    case TopologyKind::switched: return switch_half(d, p, t);
    case TopologyKind::fully_connected: return fc_half(d, p, t);
    case TopologyKind::mesh2d: {
      if (p != t.size)
        throw ValidationError("mesh2d collectives require the full mesh (" +
                              std::to_string(t.size) + " devices), got " + std::to_string(p));
      return mesh_half(d, t);
    }
  }
  throw ValidationError("unknown topology kind");
}

}  // namespace detail

inline void check_request(const CollectiveRequest& r) {
  if (r.bytes < 0) throw ValidationError("collective: negative payload");
  if (r.participants < 1) throw ValidationError("collective: participants must be >= 1");
  if (r.participants > r.topology.size)
    throw ValidationError("collective: " + std::to_string(r.participants) +
                          " participants exceed topology size " + std::to_string(r.topology.size));
}

inline CommTime reduce_scatter_time(const CollectiveRequest& r) {
  check_request(r);
  return detail::reduce_scatter_cost(r.bytes, r.participants, r.topology);
}

// All-gather mirrors reduce-scatter step for step.
inline CommTime all_gather_time(const CollectiveRequest& r) {
  check_request(r);
  return detail::reduce_scatter_cost(r.bytes, r.participants, r.topology);
}

// All-reduce = reduce-scatter + all-gather on every topology here. With one
// participant everything is free.
inline CommTime all_reduce_time(const CollectiveRequest& r) {
  check_request(r);
  CommTime c = detail::reduce_scatter_cost(r.bytes, r.participants, r.topology);
  c += detail::reduce_scatter_cost(r.bytes, r.participants, r.topology);
  return c;
}

// Expert dispatch/combine: every device exchanges its E*C*D routed tokens
// against the measured all-to-all bandwidth.
inline CommTime all_to_all_time(double experts, double capacity, double hidden,
                                Precision prec, double a2a_bandwidth_Bps) {
  if (a2a_bandwidth_Bps <= 0) throw ValidationError("all_to_all: bandwidth must be positive");
  if (experts < 0 || capacity < 0 || hidden < 0)
    throw ValidationError("all_to_all: negative argument");
  CommTime c;
  c.serialization = experts * capacity * hidden * bytes_of(prec) / a2a_bandwidth_Bps;
  c.steps = 1;
  return c;
}

inline CommTime collective_time(const CollectiveRequest& r) {
  switch (r.kind) {
    case CollectiveKind::all_reduce: return all_reduce_time(r);
    case CollectiveKind::reduce_scatter: return reduce_scatter_time(r);
    case CollectiveKind::all_gather: return all_gather_time(r);
    case CollectiveKind::p2p: {
      check_request(r);
      return p2p_delay(r.bytes, r.topology);
    }
    case CollectiveKind::all_to_all:
      throw ValidationError("all_to_all uses all_to_all_time (needs E, C, D)");
  }
  throw ValidationError("unknown collective kind");
}

// ---------------------------------------------------------------------------
// Hierarchical composition.

// How a participant group of size `group` spreads across the system's network
// levels when it starts above `inner_extent` devices already consumed by
// inner parallelism dimensions. per_level[i] is the group's extent at level
// i. Throws when the group cannot map onto contiguous whole slices.
struct GroupSpan {
  std::vector<int> per_level;

  int outermost_active(const SystemSpec& sys) const {
    int last = -1;
    for (size_t i = 0; i < per_level.size(); ++i)
      if (per_level[i] > 1) last = static_cast<int>(i);
    (void)sys;
    return last;  // -1 means the group is trivial (size 1)
  }
};

inline GroupSpan factor_group(const SystemSpec& sys, long long inner_extent, long long group) {
  if (inner_extent < 1 || group < 1)
    throw ValidationError("factor_group: extents must be >= 1");
  GroupSpan span;
  long long off = inner_extent;  // devices consumed by inner dims
  long long rem = group;
  for (const auto& lvl : sys.levels) {
    long long cap = lvl.size;
    if (off >= cap) {
      if (off % cap != 0)
        throw ValidationError("parallelism group does not align with network level boundaries");
      off /= cap;
      span.per_level.push_back(1);
      continue;
    }
    // group starts inside this level
    if (cap % off != 0)
      throw ValidationError("parallelism group does not align with network level boundaries");
    long long avail = cap / off;
    long long take = std::min(rem, avail);
    if (take < avail && rem > avail)
      throw ValidationError("parallelism group straddles a network level non-contiguously");
    if (rem % take != 0)
      throw ValidationError("parallelism group does not factor across network levels");
    span.per_level.push_back(static_cast<int>(take));
    rem /= take;
    off = 1;
  }
  if (rem != 1)
    throw ValidationError("parallelism group larger than the system (" + std::to_string(group) +
                          " over " + std::to_string(sys.total_devices()) + " devices)");
  return span;
}

// Hierarchical all-reduce: reduce-scatter inward-out (innermost level first),
// then all-gather outward-in, with the payload shrunk by each completed
// level's factor. Reduce-scatter/all-gather requests run the matching single
// phase at each level.
inline CommTime hierarchical_collective_time(CollectiveKind kind, double bytes,
                                             const SystemSpec& sys, const GroupSpan& span) {
  if (span.per_level.size() != sys.levels.size())
    throw ValidationError("group span does not match system levels");
  if (bytes < 0) throw ValidationError("hierarchical collective: negative payload");
  bool rs = kind == CollectiveKind::all_reduce || kind == CollectiveKind::reduce_scatter;
  bool ag = kind == CollectiveKind::all_reduce || kind == CollectiveKind::all_gather;
  if (!rs && !ag) throw ValidationError("hierarchical composition supports reduce-style collectives");

  CommTime total;
  std::vector<double> payload_at(sys.levels.size(), bytes);
  double d = bytes;
  for (size_t i = 0; i < sys.levels.size(); ++i) {
    payload_at[i] = d;
    int p = span.per_level[i];
    if (p > 1 && rs) total += detail::reduce_scatter_cost(d, p, sys.levels[i]);
    if (p > 1) d /= p;
  }
  for (size_t ri = sys.levels.size(); ri-- > 0;) {
    int p = span.per_level[ri];
    if (p > 1 && ag) total += detail::reduce_scatter_cost(payload_at[ri], p, sys.levels[ri]);
  }
  return total;
}

inline CommTime hierarchical_collective_time(const CollectiveRequest& r, const SystemSpec& sys) {
  GroupSpan span = factor_group(sys, 1, r.participants);
  return hierarchical_collective_time(r.kind, r.bytes, sys, span);
}

}  // namespace llmpc
