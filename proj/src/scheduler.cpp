// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "marlinlab/scheduler.hpp"

#include <algorithm>

#include "marlinlab/error.hpp"

namespace marlinlab {

void TilingConfig::validate() const {
  require(n_sm == 64 || n_sm == 128 || n_sm == 256, "tiling: n_sm must be 64, 128 or 256");
  require(k_sm >= 64 && k_sm % 64 == 0, "tiling: k_sm must be a positive multiple of 64");
  require(n_wa == 64 && k_wa == 16, "tiling: warp sub-tiles are fixed at 16 x 64");
  require(mma_m == 16 && mma_k == 16 && mma_n == 8, "tiling: mma shape is fixed at 16x16x8");
  require(warps > 0 && warps % n_blocks() == 0, "tiling: warps must be divisible by n_sm / n_wa");
  const int r = warps_per_block();
  require((r & (r - 1)) == 0, "tiling: warps per n block must be a power of two");
  require(pipeline >= 2, "tiling: pipeline depth must be at least 2");
  require(m_segment > 0 && m_segment % 16 == 0, "tiling: batch segment must be a multiple of 16");
}

int StripeAssignment::load(int sm) const {
  int total = 0;
  for (const Stripe& s : stripes.at(sm)) total += s.len;
  return total;
}

void StripeAssignment::validate() const {
  require(rows > 0 && cols > 0 && sms > 0, "plan: empty grid");
  require(static_cast<int>(stripes.size()) == sms, "plan: stripe list count differs from SM count");
  require(cols == physical_cols * segments, "plan: virtual columns inconsistent with segments");
  std::vector<int> owner(tile_count(), -1);
  for (int sm = 0; sm < sms; ++sm) {
    long prev_end = -1;  // column-major index one past the previous stripe
    for (const Stripe& s : stripes[sm]) {
      require(s.col >= 0 && s.col < cols && s.len > 0 && s.row_start >= 0 &&
                  s.row_start + s.len <= rows,
              "plan: stripe out of grid");
      require(s.physical_col == s.col % physical_cols && s.segment == s.col / physical_cols,
              "plan: stripe physical column / segment mismatch");
      const long begin = long(s.col) * rows + s.row_start;
      require(prev_end < 0 || begin == prev_end, "plan: stripes of one SM are not contiguous");
      prev_end = begin + s.len;
      for (int r = s.row_start; r < s.row_start + s.len; ++r) {
        int& o = owner[std::size_t(s.col) * rows + r];
        require(o < 0, "plan: tile assigned twice");
        o = sm;
      }
    }
  }
  for (int o : owner) require(o >= 0, "plan: tile not assigned");
}

std::size_t ReductionSchedule::steps() const {
  std::size_t n = 0;
  for (const auto& c : columns) n += c.sms.size() - 1;
  return n;
}

StripeAssignment plan_stripes(int rows, int cols, int sms) {
  require(rows >= 1 && cols >= 1 && sms >= 1, "plan_stripes: rows, cols and sms must be >= 1");
  StripeAssignment a;
  a.rows = rows;
  a.cols = cols;
  a.physical_cols = cols;
  a.sms = sms;
  const long tiles = long(rows) * cols;
  a.T = static_cast<int>((tiles + sms - 1) / sms);
  a.stripes.resize(sms);
  for (int sm = 0; sm < sms; ++sm) {
    long t = long(sm) * a.T;
    const long end = std::min(tiles, t + a.T);
    while (t < end) {
      const int col = static_cast<int>(t / rows);
      const int row = static_cast<int>(t % rows);
      const int len = static_cast<int>(std::min<long>(end - t, rows - row));
      a.stripes[sm].push_back(Stripe{col, row, len, col, 0});
      t += len;
    }
  }
  return a;
}

std::vector<std::vector<Contribution>> column_contributions(const StripeAssignment& a) {
  std::vector<std::vector<Contribution>> cols(a.cols);
  for (int sm = 0; sm < a.sms; ++sm) {
    for (int i = 0; i < static_cast<int>(a.stripes[sm].size()); ++i) {
      cols[a.stripes[sm][i].col].push_back({sm, i});
    }
  }
  for (auto& c : cols) {
    std::sort(c.begin(), c.end(), [&](const Contribution& x, const Contribution& y) {
      return a.stripes[x.sm][x.stripe].row_start > a.stripes[y.sm][y.stripe].row_start;
    });
  }
  return cols;
}

ReductionSchedule reduction_schedule(const StripeAssignment& a) {
  ReductionSchedule s;
  const auto cols = column_contributions(a);
  for (int c = 0; c < a.cols; ++c) {
    if (cols[c].size() < 2) continue;
    ColumnReduction r{c, {}};
    for (const Contribution& x : cols[c]) r.sms.push_back(x.sm);
    s.columns.push_back(std::move(r));
  }
  return s;
}

std::vector<SubTile> warp_iteration(const TilingConfig& cfg, int warp_idx) {
  cfg.validate();
  require(warp_idx >= 0 && warp_idx < cfg.warps, "warp_iteration: warp index out of range");
  const int nb = cfg.n_blocks();
  std::vector<SubTile> out;
  const int j = warp_idx % nb;
  for (int i = warp_idx / nb; i < cfg.k_blocks(); i += cfg.warps / nb) out.push_back({i, j});
  return out;
}

StripeAssignment replicate_large_batch(std::size_t m, const StripeAssignment& base,
                                       int m_segment) {
  require(m >= 1 && m_segment > 0, "replicate_large_batch: invalid batch");
  require(base.segments == 1, "replicate_large_batch: base plan is already replicated");
  const int segments = static_cast<int>((m + m_segment - 1) / m_segment);
  if (segments <= 1) return base;
  StripeAssignment a = plan_stripes(base.rows, base.physical_cols * segments, base.sms);
  a.physical_cols = base.physical_cols;
  a.segments = segments;
  for (auto& list : a.stripes) {
    for (Stripe& s : list) {
      s.physical_col = s.col % a.physical_cols;
      s.segment = s.col / a.physical_cols;
    }
  }
  return a;
}

StripeAssignment make_plan(std::size_t m, std::size_t k, std::size_t n, const TilingConfig& cfg,
                           int sms) {
  cfg.validate();
  require(k % cfg.k_sm == 0 && n % cfg.n_sm == 0, "make_plan: K, N not divisible by the SM tile");
  const auto base = plan_stripes(static_cast<int>(k / cfg.k_sm), static_cast<int>(n / cfg.n_sm), sms);
  return replicate_large_batch(m, base, cfg.m_segment);
}

}  // namespace marlinlab
