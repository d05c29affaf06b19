// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "marlinlab/codec.hpp"
#include "marlinlab/numerics.hpp"
#include "marlinlab/scheduler.hpp"
#include "marlinlab/sparse24.hpp"

namespace marlinlab::sim {

/// One m16n8k16 tensor-core step: acc[m][n] += sum_k a[m][k] * b[k][n].
/// Products of binary16 values are exact in float; they are added to the
/// accumulator one at a time in ascending k.
struct MmaFragment {
  std::array<Fp16Bits, 16 * 16> a{};  // row-major 16 x 16
  std::array<Fp16Bits, 16 * 8> b{};   // row-major 16 x 8
  std::array<float, 16 * 8> acc{};    // row-major 16 x 8
};
void mma_emulate(MmaFragment& f);

/// Sparse m16n8k16 step with a 2:4 structured left operand: row m keeps
/// a[m][c] at dense column 4 * (c / 2) + meta[m][c].
struct SparseMmaFragment {
  std::array<Fp16Bits, 16 * 8> a{};      // compressed 16 x 8
  std::array<std::uint8_t, 16 * 8> meta{};
  std::array<Fp16Bits, 16 * 8> b{};      // dense 16 (k) x 8
  std::array<float, 16 * 8> acc{};
};
void mma_sp_emulate(SparseMmaFragment& f);

struct SmTrace {
  std::size_t tiles = 0;
  std::size_t stripes = 0;
  std::size_t a_tile_loads = 0;
  std::size_t b_words_loaded = 0;
  std::size_t meta_words_loaded = 0;
  std::size_t mma_ops = 0;
  std::size_t mac_ops = 0;
  std::size_t scale_reloads = 0;
  std::size_t reduction_steps = 0;  // commits that added to an existing partial
  std::size_t output_writes = 0;    // commits of one stripe result
};

struct TraceReport {
  std::vector<SmTrace> per_sm;
  std::vector<std::uint32_t> b_word_loads;  // per packed word of B
  int segments = 1;

  SmTrace totals() const;
};

/// Output matrix plus the per-virtual-column lock counters that gate the
/// serialized global reduction.
struct OutputBuffer {
  DenseMatrix C;
  std::vector<int> locks;
};

struct GemmRun {
  OutputBuffer out;
  TraceReport trace;
};

/// Per-SM counters and per-word B loads of a completed run.
inline const TraceReport& execution_trace(const GemmRun& run) { return run.trace; }

struct SimOptions {
  unsigned workers = 1;
};

/// MARLINLAB_THREADS if set to a positive integer, otherwise `fallback`.
unsigned workers_from_env(unsigned fallback = 1);

/// Simulated dense mixed-precision GEMM: C = A (M x K) * dequant(B) (K x N).
/// Requires the marlin layout, K % k_sm == 0, N % n_sm == 0 and a plan built
/// for (M, K, N). Results are bit-identical for any worker count.
GemmRun marlin_gemm(const DenseMatrix& a, const PackedQuantMatrix& b, const TilingConfig& cfg,
                    const StripeAssignment& plan, const SimOptions& opt = {});

/// Same schedule over 2:4 compressed weights; computes C^T = B^T A^T with the
/// sparse operand on the left and transposes on write-out.
GemmRun sparse_marlin_gemm(const DenseMatrix& a, const Sparse24Matrix& b, const TilingConfig& cfg,
                           const StripeAssignment& plan, const SimOptions& opt = {});

}  // namespace marlinlab::sim
