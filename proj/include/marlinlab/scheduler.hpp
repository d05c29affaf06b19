// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

namespace marlinlab {

/// SM / warp / tensor-core tiling of one GEMM launch.
struct TilingConfig {
  int n_sm = 256;  // output columns per SM tile: 64, 128 or 256
  int k_sm = 64;   // reduction depth per SM tile, multiple of 64
  int n_wa = 64;   // warp sub-tile width
  int k_wa = 16;   // warp sub-tile depth (one mma k-step)
  int warps = 8;
  int pipeline = 4;       // prefetch depth; ordering only in the simulator
  int m_segment = 64;     // batch rows per A segment; larger batches replicate B
  int mma_m = 16, mma_k = 16, mma_n = 8;

  void validate() const;
  int n_blocks() const { return n_sm / n_wa; }
  int k_blocks() const { return k_sm / k_wa; }
  /// Warps sharing one n block, reduced by the pairwise tree.
  int warps_per_block() const { return warps / n_blocks(); }
};

/// A run of consecutive tiles of one (virtual) tile column.
struct Stripe {
  int col = 0;        // virtual column in the (possibly replicated) grid
  int row_start = 0;
  int len = 0;
  int physical_col = 0;  // col % physical columns
  int segment = 0;       // col / physical columns: 64-row batch segment of A
  friend bool operator==(const Stripe&, const Stripe&) = default;
};

struct StripeAssignment {
  int rows = 0;            // K / k_sm
  int cols = 0;            // virtual columns = physical_cols * segments
  int physical_cols = 0;   // N / n_sm
  int segments = 1;
  int sms = 0;
  int T = 0;               // tiles per SM, ceil(rows * cols / sms)
  std::vector<std::vector<Stripe>> stripes;  // per SM, column-major order

  std::size_t tile_count() const { return std::size_t(rows) * cols; }
  int load(int sm) const;
  /// Throws unless every tile is owned exactly once and stripes are contiguous.
  void validate() const;
};

struct ColumnReduction {
  int col = 0;
  std::vector<int> sms;  // commit order: bottom-most stripe first
};

struct ReductionSchedule {
  std::vector<ColumnReduction> columns;  // only columns split across >= 2 SMs
  std::size_t steps() const;
};

/// Column-major striped partition: tiles enumerated from the top-left, down
/// each column, SM s taking tiles [s*T, (s+1)*T).
StripeAssignment plan_stripes(int rows, int cols, int sms);

/// Contributors of every split column ordered by descending row_start.
ReductionSchedule reduction_schedule(const StripeAssignment& a);

/// Per-column commit order including single-contributor columns, as
/// (sm, stripe index within that SM) pairs, bottom-most first.
struct Contribution {
  int sm;
  int stripe;
};
std::vector<std::vector<Contribution>> column_contributions(const StripeAssignment& a);

struct SubTile {
  int i;  // k sub-tile within the SM tile
  int j;  // n block within the SM tile
  friend bool operator==(SubTile, SubTile) = default;
};

/// Sub-tiles visited by warp_idx during one k_sm step: j = warp mod n-blocks,
/// i starting at warp / n-blocks and advancing by warps / n-blocks.
std::vector<SubTile> warp_iteration(const TilingConfig& cfg, int warp_idx);

/// Replicates the tile grid once per 64-row batch segment so the stripes run
/// over segments * cols virtual columns. m <= 64 returns the base plan.
StripeAssignment replicate_large_batch(std::size_t m, const StripeAssignment& base,
                                       int m_segment = 64);

/// Plan for a K x N weight matrix and m batch rows.
StripeAssignment make_plan(std::size_t m, std::size_t k, std::size_t n, const TilingConfig& cfg,
                           int sms);

}  // namespace marlinlab
