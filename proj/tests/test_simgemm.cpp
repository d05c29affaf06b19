// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>

#include "marlinlab/oracle.hpp"
#include "marlinlab/simgemm.hpp"
#include "marlinlab/sparse24.hpp"
#include "oracles.hpp"

using namespace marlinlab;
using namespace marlinlab::sim;

namespace {

QuantizedWeights constant_codes(std::size_t k, std::size_t n, int code, int group) {
  QuantizedWeights q;
  q.K = k;
  q.N = n;
  q.spec = {4, group, true};
  q.codes.assign(k * n, static_cast<std::int8_t>(code));
  q.scales.assign(q.groups() * n, kFp16One);
  return q;
}

TilingConfig tiling(int n_sm, int k_sm, int warps = 8) {
  TilingConfig c;
  c.n_sm = n_sm;
  c.k_sm = k_sm;
  c.warps = warps;
  return c;
}

}  // namespace

TEST_CASE("mma emulation matches the float reference") {
  Rng rng(41);
  for (int t = 0; t < 50; ++t) {
    MmaFragment f;
    const DenseMatrix a = oracles::random_matrix(rng, 16, 16, -4, 4);
    const DenseMatrix b = oracles::random_matrix(rng, 16, 8, -4, 4);
    std::copy(a.data().begin(), a.data().end(), f.a.begin());
    std::copy(b.data().begin(), b.data().end(), f.b.begin());
    const auto want = oracles::matmul_float(a, b);
    mma_emulate(f);
    for (int i = 0; i < 128; ++i) REQUIRE(f.acc[i] == want[i]);
  }
}

TEST_CASE("sparse mma selects operands through metadata") {
  Rng rng(42);
  for (int t = 0; t < 50; ++t) {
    SparseMmaFragment f;
    DenseMatrix dense(16, 16);
    for (int m = 0; m < 16; ++m) {
      for (int c = 0; c < 8; c += 2) {
        const int i0 = int(rng.below(3));
        const int i1 = i0 + 1 + int(rng.below(3 - i0));
        const Fp16Bits v0 = fp16_round(rng.uniform(-2, 2)), v1 = fp16_round(rng.uniform(-2, 2));
        f.a[m * 8 + c] = v0;
        f.a[m * 8 + c + 1] = v1;
        f.meta[m * 8 + c] = std::uint8_t(i0);
        f.meta[m * 8 + c + 1] = std::uint8_t(i1);
        dense.set(m, 2 * c + i0, v0);
        dense.set(m, 2 * c + i1, v1);
      }
    }
    const DenseMatrix b = oracles::random_matrix(rng, 16, 8, -2, 2);
    std::copy(b.data().begin(), b.data().end(), f.b.begin());
    mma_sp_emulate(f);
    const auto want = oracles::matmul_float(dense, b);
    for (int i = 0; i < 128; ++i) REQUIRE(f.acc[i] == want[i]);
  }
}

TEST_CASE("all-ones product") {
  const DenseMatrix a = DenseMatrix::filled(16, 128, 1.0);
  const PackedQuantMatrix b = repack_marlin(constant_codes(128, 64, 1, kPerColumn));
  const TilingConfig cfg = tiling(64, 64);
  const GemmRun run = marlin_gemm(a, b, cfg, make_plan(16, 128, 64, cfg, 3));
  CHECK(run.out.C == DenseMatrix::filled(16, 64, 128.0));
}

TEST_CASE("zero weights still complete every reduction lock") {
  Rng rng(43);
  const DenseMatrix a = oracles::random_matrix(rng, 20, 512, -1, 1);
  const PackedQuantMatrix b = repack_marlin(constant_codes(512, 128, 0, 128));
  const TilingConfig cfg = tiling(64, 64);
  const StripeAssignment plan = make_plan(20, 512, 128, cfg, 5);
  const GemmRun run = marlin_gemm(a, b, cfg, plan);
  CHECK(run.out.C == DenseMatrix(20, 128));
  const auto contrib = column_contributions(plan);
  for (int c = 0; c < plan.cols; ++c) CHECK(run.out.locks[c] == int(contrib[c].size()));
}

TEST_CASE("trace of the 4 x 3 over 5 SMs example") {
  Rng rng(44);
  const TilingConfig cfg = tiling(64, 64);
  const DenseMatrix a = oracles::random_matrix(rng, 16, 256, -1, 1);
  const PackedQuantMatrix b = repack_marlin(quantize_symmetric(oracles::random_matrix(rng, 256, 192, -1, 1),
                                                               {4, 64, true}));
  const StripeAssignment plan = make_plan(16, 256, 192, cfg, 5);
  REQUIRE(plan.rows == 4);
  REQUIRE(plan.cols == 3);
  const GemmRun run = marlin_gemm(a, b, cfg, plan);
  const TraceReport& tr = execution_trace(run);
  const std::vector<std::size_t> tiles{3, 3, 3, 3, 0};
  for (int sm = 0; sm < 5; ++sm) {
    CHECK(tr.per_sm[sm].tiles == tiles[sm]);
    CHECK(tr.per_sm[sm].a_tile_loads == tiles[sm]);
    CHECK(tr.per_sm[sm].stripes == plan.stripes[sm].size());
  }
  // Every packed word of B is fetched exactly once.
  CHECK(tr.b_word_loads.size() == b.words.size());
  for (auto n : tr.b_word_loads) CHECK(n == 1);
  const SmTrace t = tr.totals();
  CHECK(t.b_words_loaded == b.words.size());
  CHECK(t.mma_ops == (16 / 16) * (192 / 8) * (256 / 16));
  CHECK(t.mac_ops == 16ull * 256 * 192);
  // One scale fetch per 16 x 64 sub-tile when grouped.
  CHECK(t.scale_reloads == (256 / 16) * (192 / 64));
  CHECK(t.output_writes == 6);  // one commit per stripe
  CHECK(t.reduction_steps == 3);
  CHECK(t.meta_words_loaded == 0);
}

TEST_CASE("per-column scales are applied once per column") {
  Rng rng(45);
  const TilingConfig cfg = tiling(128, 128, 4);
  const DenseMatrix a = oracles::random_matrix(rng, 100, 256, -1, 1);
  const QuantizedWeights q = quantize_symmetric(oracles::random_matrix(rng, 256, 256, -1, 1), {4, kPerColumn, true});
  const StripeAssignment plan = make_plan(100, 256, 256, cfg, 3);
  REQUIRE(plan.segments == 2);
  const GemmRun run = marlin_gemm(a, repack_marlin(q), cfg, plan);
  CHECK(run.out.C == oracle::reference_marlin_gemm(a, q, cfg, plan));
  const SmTrace t = run.trace.totals();
  CHECK(t.scale_reloads == std::size_t(plan.cols));
  // Two batch segments: every word is fetched once per segment.
  for (auto n : run.trace.b_word_loads) CHECK(n == 2);
}

TEST_CASE("marlin_gemm equals the mirrored reference and stays close to the naive product") {
  Rng rng(46);
  for (int t = 0; t < 24; ++t) {
    const int n_sm = std::array<int, 3>{64, 128, 256}[rng.below(3)];
    const int k_sm = std::array<int, 2>{64, 128}[rng.below(2)];
    const int warps = std::array<int, 2>{4, 8}[rng.below(2)];
    const std::size_t M = 1 + rng.below(80);
    const std::size_t K = std::size_t(k_sm) * (1 + rng.below(4));
    const std::size_t N = std::size_t(n_sm) * (1 + rng.below(2));
    const int group = rng.below(2) ? kPerColumn : 64;
    if (group != kPerColumn && K % 64 != 0) continue;
    const TilingConfig cfg = tiling(n_sm, k_sm, warps);
    const DenseMatrix a = oracles::random_matrix(rng, M, K, -1, 1);
    const QuantizedWeights q = quantize_symmetric(oracles::random_matrix(rng, K, N, -1, 1), {4, group, true});
    const StripeAssignment plan = make_plan(M, K, N, cfg, 1 + int(rng.below(12)));
    const GemmRun run = marlin_gemm(a, repack_marlin(q), cfg, plan);
    REQUIRE(run.out.C == oracle::reference_marlin_gemm(a, q, cfg, plan));
    CHECK(oracle::normwise_relative_error(run.out.C, oracle::naive_gemm(a, q)) <= 1e-2);
  }
}

TEST_CASE("integer inputs are exact") {
  Rng rng(47);
  const DenseMatrix a = oracles::random_int_matrix(rng, 33, 256, -8, 8);
  QuantizedWeights q = constant_codes(256, 128, 0, kPerColumn);
  for (auto& c : q.codes) c = static_cast<std::int8_t>(rng.range(-8, 7));
  const TilingConfig cfg = tiling(64, 64);
  const GemmRun run = marlin_gemm(a, repack_marlin(q), cfg, make_plan(33, 256, 128, cfg, 7));
  for (std::size_t m = 0; m < 33; ++m) {
    for (std::size_t n = 0; n < 128; ++n) {
      long exact = 0;
      for (std::size_t k = 0; k < 256; ++k) exact += long(a.value(m, k)) * q.code(k, n);
      REQUIRE(run.out.C.value(m, n) == float(exact));
    }
  }
}

TEST_CASE("worker count does not change the output") {
  Rng rng(48);
  const TilingConfig cfg = tiling(64, 64);
  const DenseMatrix a = oracles::random_matrix(rng, 70, 512, -1, 1);
  const PackedQuantMatrix b = repack_marlin(quantize_symmetric(oracles::random_matrix(rng, 512, 256, -1, 1),
                                                               {4, 128, true}));
  const StripeAssignment plan = make_plan(70, 512, 256, cfg, 9);
  const GemmRun one = marlin_gemm(a, b, cfg, plan, {1});
  for (unsigned w : {2u, 4u, 8u}) {
    const GemmRun many = marlin_gemm(a, b, cfg, plan, {w});
    CHECK(many.out.C == one.out.C);
    CHECK(many.trace.b_word_loads == one.trace.b_word_loads);
  }
}

TEST_CASE("sparse path matches the dense path over decompressed weights") {
  Rng rng(49);
  for (int sel = 0; sel < 2; ++sel) {
    for (int group : {kPerColumn, 128}) {
      const TilingConfig cfg = tiling(128, 64);
      const std::size_t M = 1 + rng.below(90), K = 256, N = 256;
      const DenseMatrix a = oracles::random_matrix(rng, M, K, -1, 1);
      const DenseMatrix w = prune_2of4(oracles::random_matrix(rng, K, N, -1, 1));
      const QuantSpec spec{4, group, true};
      const Sparse24Matrix s = compress_2of4(w, spec, {}, sel);
      const StripeAssignment plan = make_plan(M, K, N, cfg, 5);
      const GemmRun sparse = sparse_marlin_gemm(a, s, cfg, plan);
      const QuantizedWeights dense_q = expand_codes(s);
      const GemmRun dense = marlin_gemm(a, repack_marlin(dense_q), cfg, plan);
      REQUIRE(sparse.out.C == dense.out.C);
      CHECK(sparse.out.C == oracle::reference_marlin_gemm(a, dense_q, cfg, plan));

      const SmTrace st = sparse.trace.totals(), dt = dense.trace.totals();
      CHECK(st.mma_ops == dt.mma_ops);
      CHECK(2 * st.mac_ops == dt.mac_ops);
      CHECK(st.meta_words_loaded == std::size_t(plan.segments) * K * N / 32);
      CHECK(st.b_words_loaded == std::size_t(plan.segments) * s.values.size());
      CHECK(st.scale_reloads == dt.scale_reloads);
    }
  }
}

TEST_CASE("sparse all-zero weights give a zero output") {
  Rng rng(50);
  const TilingConfig cfg = tiling(64, 64);
  const Sparse24Matrix s = compress_2of4(DenseMatrix(128, 128), {4, 64, true});
  const GemmRun run = sparse_marlin_gemm(oracles::random_matrix(rng, 9, 128, -3, 3), s, cfg,
                                         make_plan(9, 128, 128, cfg, 4));
  CHECK(run.out.C == DenseMatrix(9, 128));
}

TEST_CASE("argument validation") {
  Rng rng(51);
  const TilingConfig cfg = tiling(64, 64);
  const PackedQuantMatrix b = repack_marlin(constant_codes(128, 64, 1, kPerColumn));
  const DenseMatrix a = DenseMatrix::filled(4, 128, 1.0);
  CHECK_THROWS_AS(marlin_gemm(a, b, cfg, make_plan(4, 128, 128, cfg, 2)), Error);
  CHECK_THROWS_AS(marlin_gemm(DenseMatrix::filled(4, 64, 1.0), b, cfg, make_plan(4, 128, 64, cfg, 2)), Error);
  CHECK_THROWS_AS(marlin_gemm(DenseMatrix::filled(100, 128, 1.0), b, cfg, make_plan(4, 128, 64, cfg, 2)), Error);
  CHECK_THROWS_AS(marlin_gemm(a, pack_raw(constant_codes(128, 64, 1, kPerColumn)), cfg,
                              make_plan(4, 128, 64, cfg, 2)),
                  Error);
}

TEST_CASE("worker count from the environment") {
  ::setenv("MARLINLAB_THREADS", "6", 1);
  CHECK(workers_from_env(1) == 6);
  ::setenv("MARLINLAB_THREADS", "zero", 1);
  CHECK(workers_from_env(3) == 3);
  ::unsetenv("MARLINLAB_THREADS");
  CHECK(workers_from_env(2) == 2);
}
