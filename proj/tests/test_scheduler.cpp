// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <map>

#include "marlinlab/error.hpp"
#include "marlinlab/scheduler.hpp"
#include "oracles.hpp"

using namespace marlinlab;

namespace {

Stripe stripe(int col, int row_start, int len) { return Stripe{col, row_start, len, col, 0}; }

}  // namespace

TEST_CASE("worked example: 4 x 3 tiles over 5 SMs") {
  const StripeAssignment a = plan_stripes(4, 3, 5);
  CHECK(a.T == 3);
  CHECK_NOTHROW(a.validate());
  REQUIRE(a.stripes.size() == 5);
  CHECK(a.stripes[0] == std::vector<Stripe>{stripe(0, 0, 3)});
  CHECK(a.stripes[1] == std::vector<Stripe>{stripe(0, 3, 1), stripe(1, 0, 2)});
  CHECK(a.stripes[2] == std::vector<Stripe>{stripe(1, 2, 2), stripe(2, 0, 1)});
  CHECK(a.stripes[3] == std::vector<Stripe>{stripe(2, 1, 3)});
  CHECK(a.stripes[4].empty());
  for (int sm = 0; sm < 4; ++sm) CHECK(a.load(sm) == 3);
  CHECK(a.load(4) == 0);

  const ReductionSchedule r = reduction_schedule(a);
  REQUIRE(r.columns.size() == 3);
  CHECK(r.columns[0].sms == std::vector<int>{1, 0});
  CHECK(r.columns[1].sms == std::vector<int>{2, 1});
  CHECK(r.columns[2].sms == std::vector<int>{3, 2});
  CHECK(r.steps() == 3);
}

TEST_CASE("random partitions match direct tile enumeration") {
  Rng rng(31);
  for (int t = 0; t < 1000; ++t) {
    const int rows = 1 + int(rng.below(20)), cols = 1 + int(rng.below(20)), sms = 1 + int(rng.below(120));
    const StripeAssignment a = plan_stripes(rows, cols, sms);
    REQUIRE_NOTHROW(a.validate());
    const auto owners = oracles::tile_owners(rows, cols, sms);
    std::vector<int> got(owners.size(), -1);
    for (int sm = 0; sm < sms; ++sm) {
      CHECK(a.load(sm) <= a.T);
      for (const Stripe& s : a.stripes[sm]) {
        for (int r = s.row_start; r < s.row_start + s.len; ++r) got[std::size_t(s.col) * rows + r] = sm;
      }
    }
    REQUIRE(got == owners);

    // Commit order of every column: contributors sorted bottom-first.
    const auto contrib = column_contributions(a);
    REQUIRE(int(contrib.size()) == cols);
    for (int c = 0; c < cols; ++c) {
      int covered = 0;
      for (std::size_t i = 0; i < contrib[c].size(); ++i) {
        const Stripe& s = a.stripes[contrib[c][i].sm][contrib[c][i].stripe];
        CHECK(s.col == c);
        covered += s.len;
        if (i > 0) {
          CHECK(a.stripes[contrib[c][i - 1].sm][contrib[c][i - 1].stripe].row_start > s.row_start);
        }
      }
      CHECK(covered == rows);
    }
    std::size_t steps = 0;
    for (const auto& list : contrib) steps += list.size() - 1;
    CHECK(reduction_schedule(a).steps() == steps);
  }
}

TEST_CASE("validate rejects broken assignments") {
  StripeAssignment a = plan_stripes(4, 3, 5);
  StripeAssignment b = a;
  b.stripes[3][0].len = 2;
  CHECK_THROWS_AS(b.validate(), Error);
  b = a;
  b.stripes[4].push_back(stripe(2, 3, 1));
  CHECK_THROWS_AS(b.validate(), Error);
  b = a;
  b.stripes.pop_back();
  CHECK_THROWS_AS(b.validate(), Error);
  CHECK_THROWS_AS(plan_stripes(0, 3, 5), Error);
}

TEST_CASE("warp iteration") {
  TilingConfig cfg;
  cfg.n_sm = 128;
  cfg.k_sm = 64;
  cfg.warps = 8;
  CHECK(cfg.n_blocks() == 2);
  CHECK(cfg.k_blocks() == 4);
  CHECK(warp_iteration(cfg, 3) == std::vector<SubTile>{{1, 1}});
  CHECK(warp_iteration(cfg, 6) == std::vector<SubTile>{{3, 0}});

  cfg.n_sm = 64;
  cfg.warps = 4;
  cfg.k_sm = 128;
  CHECK(warp_iteration(cfg, 1) == std::vector<SubTile>{{1, 0}, {5, 0}});

  // Every sub-tile is visited exactly once per k_sm step.
  for (int n_sm : {64, 128, 256}) {
    for (int warps : {4, 8}) {
      for (int k_sm : {64, 128, 256}) {
        TilingConfig c;
        c.n_sm = n_sm;
        c.warps = warps;
        c.k_sm = k_sm;
        std::map<std::pair<int, int>, int> seen;
        for (int w = 0; w < warps; ++w) {
          for (const SubTile& s : warp_iteration(c, w)) ++seen[{s.i, s.j}];
        }
        CHECK(int(seen.size()) == c.k_blocks() * c.n_blocks());
        for (const auto& [key, count] : seen) CHECK(count == 1);
      }
    }
  }
  CHECK_THROWS_AS(warp_iteration(cfg, 4), Error);
  cfg.warps = 3;
  CHECK_THROWS_AS(cfg.validate(), Error);
  TilingConfig bad;
  bad.n_sm = 96;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("large batches replicate the column grid per 64-row segment") {
  const StripeAssignment base = plan_stripes(4, 2, 3);
  CHECK(replicate_large_batch(64, base).cols == 2);
  const StripeAssignment r = replicate_large_batch(128, base);
  CHECK_NOTHROW(r.validate());
  CHECK(r.segments == 2);
  CHECK(r.cols == 4);
  CHECK(r.physical_cols == 2);
  bool found = false;
  for (const auto& list : r.stripes) {
    for (const Stripe& s : list) {
      CHECK(s.physical_col == s.col % 2);
      CHECK(s.segment == s.col / 2);
      if (s.col == 3) {
        found = true;
        CHECK(s.physical_col == 1);
        CHECK(s.segment == 1);
      }
    }
  }
  CHECK(found);
  CHECK(replicate_large_batch(129, base).segments == 3);
  CHECK_THROWS_AS(replicate_large_batch(128, r), Error);
}

TEST_CASE("make_plan derives the grid from the tiling") {
  TilingConfig cfg;
  cfg.n_sm = 128;
  cfg.k_sm = 128;
  const StripeAssignment a = make_plan(16, 512, 384, cfg, 7);
  CHECK(a.rows == 4);
  CHECK(a.cols == 3);
  CHECK(a.sms == 7);
  CHECK_THROWS_AS(make_plan(16, 500, 384, cfg, 7), Error);
  CHECK(make_plan(200, 512, 384, cfg, 7).segments == 4);
}
