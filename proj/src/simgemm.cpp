// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "marlinlab/simgemm.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <memory>
#include <string>

#include "marlinlab/error.hpp"
#include "marlinlab/layout.hpp"
#include "parallel.hpp"

namespace marlinlab::sim {

void mma_emulate(MmaFragment& f) {
  for (int m = 0; m < 16; ++m) {
    for (int n = 0; n < 8; ++n) {
      float acc = f.acc[m * 8 + n];
      for (int k = 0; k < 16; ++k) acc += to_float(f.a[m * 16 + k]) * to_float(f.b[k * 8 + n]);
      f.acc[m * 8 + n] = acc;
    }
  }
}

void mma_sp_emulate(SparseMmaFragment& f) {
  for (int m = 0; m < 16; ++m) {
    for (int n = 0; n < 8; ++n) {
      float acc = f.acc[m * 8 + n];
      for (int c = 0; c < 8; ++c) {
        const int k = 4 * (c / 2) + f.meta[m * 8 + c];
        acc += to_float(f.a[m * 8 + c]) * to_float(f.b[k * 8 + n]);
      }
      f.acc[m * 8 + n] = acc;
    }
  }
}

SmTrace TraceReport::totals() const {
  SmTrace t;
  for (const SmTrace& s : per_sm) {
    t.tiles += s.tiles;
    t.stripes += s.stripes;
    t.a_tile_loads += s.a_tile_loads;
    t.b_words_loaded += s.b_words_loaded;
    t.meta_words_loaded += s.meta_words_loaded;
    t.mma_ops += s.mma_ops;
    t.mac_ops += s.mac_ops;
    t.scale_reloads += s.scale_reloads;
    t.reduction_steps += s.reduction_steps;
    t.output_writes += s.output_writes;
  }
  return t;
}

unsigned workers_from_env(unsigned fallback) {
  const char* v = std::getenv("MARLINLAB_THREADS");
  if (v == nullptr || *v == '\0') return fallback;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n <= 0) return fallback;
  return static_cast<unsigned>(std::min(n, 1024L));
}

namespace {

using LoadCounters = std::unique_ptr<std::atomic<std::uint32_t>[]>;

/// One A tile (a batch segment x k_sm) in shared memory, 16-byte vectors
/// stored at their swizzled positions.
class SharedA {
 public:
  void stage(const DenseMatrix& a, std::size_t row0, std::size_t rows_real, std::size_t rows_pad,
             std::size_t k0, int k_sm) {
    row_vectors_ = k_sm / 8;
    data_.assign(rows_pad * std::size_t(k_sm), kFp16Zero);
    for (std::size_t m = 0; m < rows_real; ++m) {
      for (int kk = 0; kk < k_sm; ++kk) data_[index(int(m), kk)] = a.at(row0 + m, k0 + kk);
    }
  }
  Fp16Bits load(int m, int kk) const { return data_[index(m, kk)]; }

 private:
  std::size_t index(int m, int kk) const {
    const layout::VectorCoord v = layout::swizzle_any(m, kk / 8);
    return (std::size_t(v.row) * row_vectors_ + v.col) * 8 + kk % 8;
  }
  int row_vectors_ = 0;
  std::vector<Fp16Bits> data_;
};

/// Dense marlin-layout weights. Accumulators are row-major rows_pad x 64.
class DenseSource {
 public:
  static constexpr bool kTransposed = false;

  explicit DenseSource(const PackedQuantMatrix& p) : p_(p) {
    p.validate();
    require(p.layout == PackLayout::marlin, "marlin_gemm: weights must use the marlin layout");
  }
  std::size_t K() const { return p_.K; }
  std::size_t N() const { return p_.N; }
  bool per_column() const { return p_.group_size == kPerColumn; }
  std::size_t word_count() const { return p_.words.size(); }
  Fp16Bits column_scale(std::size_t n) const { return p_.packed_scales[packed_scale_index(n)]; }

  void mark_tile(std::size_t k0, std::size_t n0, const TilingConfig& cfg, LoadCounters& loads,
                 SmTrace& tr) const {
    const std::size_t n_tiles = p_.N / kTileN;
    for (std::size_t kt = k0 / kTileK; kt < (k0 + cfg.k_sm) / kTileK; ++kt) {
      for (std::size_t nt = n0 / kTileN; nt < (n0 + cfg.n_sm) / kTileN; ++nt) {
        const std::size_t base = (kt * n_tiles + nt) * kWordsPerTile;
        for (int w = 0; w < kWordsPerTile; ++w) loads[base + w].fetch_add(1, std::memory_order_relaxed);
        tr.b_words_loaded += kWordsPerTile;
      }
    }
  }

  void accumulate(std::size_t k0, std::size_t n0, const SharedA& a, int a_k, int rows_pad,
                  float* acc, SmTrace& tr) const {
    const Word32* words = p_.words.data() + ((k0 / kTileK) * (p_.N / kTileN) + n0 / kTileN) * kWordsPerTile;
    const bool grouped = !per_column();
    const std::size_t scale_base = grouped ? (k0 / p_.group_size) * p_.N + n0 : 0;

    std::array<Fp16Bits, kTileK * kTileN> b;
    for (int lane = 0; lane < 32; ++lane) {
      const Fp16Bits* scales = p_.packed_scales.data() + scale_base + 8 * (lane / 4);
      for (int block = 0; block < 4; ++block) {
        const Word32 w = words[lane * 4 + block];
        for (int pair = 0; pair < 4; ++pair) {
          const auto [even, odd] = decode_pair(w, pair);
          for (int slot = 2 * pair; slot < 2 * pair + 2; ++slot) {
            Fp16Bits v = slot % 2 == 0 ? even : odd;
            if (grouped) v = fp16_mul(v, scales[lane_scale_index(block, slot)]);
            const TileCoord c = marlin_fragment_coord(lane, block, slot);
            b[c.row * kTileN + c.col] = v;
          }
        }
      }
    }
    if (grouped) ++tr.scale_reloads;

    MmaFragment f;
    for (int mb = 0; mb < rows_pad / 16; ++mb) {
      for (int m = 0; m < 16; ++m) {
        for (int k = 0; k < 16; ++k) f.a[m * 16 + k] = a.load(mb * 16 + m, a_k + k);
      }
      for (int nb = 0; nb < kTileN / 8; ++nb) {
        for (int k = 0; k < 16; ++k) {
          for (int n = 0; n < 8; ++n) f.b[k * 8 + n] = b[k * kTileN + nb * 8 + n];
        }
        for (int m = 0; m < 16; ++m) {
          for (int n = 0; n < 8; ++n) f.acc[m * 8 + n] = acc[(mb * 16 + m) * kTileN + nb * 8 + n];
        }
        mma_emulate(f);
        for (int m = 0; m < 16; ++m) {
          for (int n = 0; n < 8; ++n) acc[(mb * 16 + m) * kTileN + nb * 8 + n] = f.acc[m * 8 + n];
        }
        ++tr.mma_ops;
        tr.mac_ops += 16 * 16 * 8;
      }
    }
  }

 private:
  const PackedQuantMatrix& p_;
};

/// 2:4 sparse weights on the left of the transposed product. Accumulators
/// are n-major 64 x rows_pad.
class SparseSource {
 public:
  static constexpr bool kTransposed = true;

  explicit SparseSource(const Sparse24Matrix& s) : s_(s) { s.validate(); }
  std::size_t K() const { return s_.K; }
  std::size_t N() const { return s_.N; }
  bool per_column() const { return s_.group_size == kPerColumn; }
  std::size_t word_count() const { return s_.values.size(); }
  Fp16Bits column_scale(std::size_t n) const { return s_.scales[packed_scale_index(n)]; }

  void mark_tile(std::size_t k0, std::size_t n0, const TilingConfig& cfg, LoadCounters& loads,
                 SmTrace& tr) const {
    const std::size_t n_tiles = s_.N / kSparseTileRows;
    const std::size_t per_tile = kSparseTileRows * kSparseTileCols / 8;
    for (std::size_t ct = k0 / 32; ct < (k0 + cfg.k_sm) / 32; ++ct) {
      for (std::size_t nt = n0 / kSparseTileRows; nt < (n0 + cfg.n_sm) / kSparseTileRows; ++nt) {
        const std::size_t base = (ct * n_tiles + nt) * per_tile;
        for (std::size_t w = 0; w < per_tile; ++w) loads[base + w].fetch_add(1, std::memory_order_relaxed);
        tr.b_words_loaded += per_tile;
      }
    }
    tr.meta_words_loaded += std::size_t(cfg.k_sm) * cfg.n_sm / 32;
  }

  void accumulate(std::size_t k0, std::size_t n0, const SharedA& a, int a_k, int rows_pad,
                  float* acc, SmTrace& tr) const {
    const std::size_t c0 = k0 / 2, ct = c0 / kSparseTileCols;
    const int half = static_cast<int>((c0 % kSparseTileCols) / 8);
    const Word32* words = s_.values.data() +
                          (ct * (s_.N / kSparseTileRows) + n0 / kSparseTileRows) * (kSparseTileRows * kSparseTileCols / 8);
    const bool grouped = !per_column();
    const std::size_t scale_base = grouped ? (k0 / s_.group_size) * s_.N : 0;

    std::array<Fp16Bits, 64 * 8> vals;
    std::array<std::uint8_t, 64 * 8> meta;
    for (int lane = 0; lane < 32; ++lane) {
      for (int it = 0; it < 4; ++it) {
        const Word32 w = words[lane * 4 + it];
        for (int pair = 2 * half; pair < 2 * half + 2; ++pair) {
          const auto [even, odd] = decode_pair(w, pair);
          for (int slot = 2 * pair; slot < 2 * pair + 2; ++slot) {
            const TileCoord c = sparse_fragment_coord(lane, it, slot);
            Fp16Bits v = slot % 2 == 0 ? even : odd;
            if (grouped) v = fp16_mul(v, s_.scales[scale_base + packed_scale_index(n0 + c.row)]);
            vals[c.row * 8 + c.col - 8 * half] = v;
          }
        }
      }
    }
    for (int row = 0; row < 64; ++row) {
      const std::uint32_t w = s_.meta[meta_stream_index(s_.N, n0 + row, ct, s_.selector)];
      for (int c = 0; c < 8; ++c) meta[row * 8 + c] = (w >> (2 * (8 * half + c))) & 0x3u;
    }
    if (grouped) ++tr.scale_reloads;

    SparseMmaFragment f;
    for (int mb = 0; mb < rows_pad / 8; ++mb) {
      for (int k = 0; k < 16; ++k) {
        for (int m = 0; m < 8; ++m) f.b[k * 8 + m] = a.load(mb * 8 + m, a_k + k);
      }
      for (int it = 0; it < 4; ++it) {
        for (int r = 0; r < 16; ++r) {
          for (int c = 0; c < 8; ++c) {
            f.a[r * 8 + c] = vals[(16 * it + r) * 8 + c];
            f.meta[r * 8 + c] = meta[(16 * it + r) * 8 + c];
          }
          for (int m = 0; m < 8; ++m) f.acc[r * 8 + m] = acc[(16 * it + r) * rows_pad + mb * 8 + m];
        }
        mma_sp_emulate(f);
        for (int r = 0; r < 16; ++r) {
          for (int m = 0; m < 8; ++m) acc[(16 * it + r) * rows_pad + mb * 8 + m] = f.acc[r * 8 + m];
        }
        ++tr.mma_ops;
        tr.mac_ops += 16 * 8 * 8;
      }
    }
  }

 private:
  const Sparse24Matrix& s_;
};

template <class Source>
GemmRun run_engine(const DenseMatrix& a, const Source& src, const TilingConfig& cfg,
                   const StripeAssignment& plan, const SimOptions& opt) {
  cfg.validate();
  plan.validate();
  const std::size_t M = a.rows(), K = src.K(), N = src.N();
  require(M > 0 && a.cols() == K, "gemm: A must be M x K");
  require(K % cfg.k_sm == 0 && N % cfg.n_sm == 0, "gemm: K, N must be divisible by the SM tile");
  const std::size_t segments = (M + cfg.m_segment - 1) / cfg.m_segment;
  require(std::size_t(plan.rows) == K / cfg.k_sm && std::size_t(plan.physical_cols) == N / cfg.n_sm &&
              std::size_t(plan.segments) == segments,
          "gemm: plan does not match the problem shape");

  const int nb = cfg.n_blocks(), R = cfg.warps_per_block();
  std::vector<std::vector<SubTile>> iters(cfg.warps);
  for (int w = 0; w < cfg.warps; ++w) iters[w] = warp_iteration(cfg, w);

  const std::size_t n_words = src.word_count();
  LoadCounters loads = std::make_unique<std::atomic<std::uint32_t>[]>(n_words);
  std::vector<SmTrace> traces(plan.sms);
  std::vector<std::vector<std::vector<float>>> partials(plan.sms);

  detail::parallel_for(std::size_t(plan.sms), opt.workers, [&](std::size_t sm) {
    SmTrace& tr = traces[sm];
    SharedA smem;
    for (const Stripe& st : plan.stripes[sm]) {
      ++tr.stripes;
      const std::size_t row0 = std::size_t(st.segment) * cfg.m_segment;
      const std::size_t rows_real = std::min<std::size_t>(cfg.m_segment, M - row0);
      const int rows_pad = static_cast<int>((rows_real + 15) / 16 * 16);
      const std::size_t n_base = std::size_t(st.physical_col) * cfg.n_sm;

      std::vector<std::vector<float>> acc(cfg.warps, std::vector<float>(std::size_t(rows_pad) * cfg.n_wa, 0.0f));
      for (int r = st.row_start; r < st.row_start + st.len; ++r) {
        const std::size_t k_base = std::size_t(r) * cfg.k_sm;
        smem.stage(a, row0, rows_real, rows_pad, k_base, cfg.k_sm);
        ++tr.a_tile_loads;
        ++tr.tiles;
        src.mark_tile(k_base, n_base, cfg, loads, tr);
        for (int w = 0; w < cfg.warps; ++w) {
          for (const SubTile& t : iters[w]) {
            src.accumulate(k_base + std::size_t(t.i) * cfg.k_wa, n_base + std::size_t(t.j) * cfg.n_wa,
                           smem, t.i * cfg.k_wa, rows_pad, acc[w].data(), tr);
          }
        }
      }
      // Pairwise tree over the warps that share an n block: warp r*nb + j.
      for (int stride = R / 2; stride >= 1; stride /= 2) {
        for (int r = 0; r < stride; ++r) {
          for (int j = 0; j < nb; ++j) {
            auto& dst = acc[r * nb + j];
            const auto& other = acc[(r + stride) * nb + j];
            for (std::size_t e = 0; e < dst.size(); ++e) dst[e] = dst[e] + other[e];
          }
        }
      }
      std::vector<float> part(rows_real * cfg.n_sm);
      for (int j = 0; j < nb; ++j) {
        const auto& src_acc = acc[j];
        for (std::size_t m = 0; m < rows_real; ++m) {
          for (int n = 0; n < cfg.n_wa; ++n) {
            part[m * cfg.n_sm + j * cfg.n_wa + n] = Source::kTransposed
                                                        ? src_acc[std::size_t(n) * rows_pad + m]
                                                        : src_acc[m * cfg.n_wa + n];
          }
        }
      }
      partials[sm].push_back(std::move(part));
    }
  });

  // Serialized global reduction: per virtual column, contributors commit in
  // lock order from the bottom-most stripe upwards.
  const auto order = column_contributions(plan);
  GemmRun run;
  run.out.C = DenseMatrix(M, N);
  run.out.locks.assign(plan.cols, 0);
  const bool per_column = src.per_column();
  detail::parallel_for(std::size_t(plan.cols), opt.workers, [&](std::size_t vc) {
    const auto& list = order[vc];
    for (std::size_t pos = 0; pos < list.size(); ++pos) {
      const Contribution& c = list[pos];
      require(run.out.locks[vc] == static_cast<int>(pos), "gemm: reduction lock out of order");
      const Stripe& st = plan.stripes[c.sm][c.stripe];
      const std::size_t row0 = std::size_t(st.segment) * cfg.m_segment;
      const std::size_t rows_real = std::min<std::size_t>(cfg.m_segment, M - row0);
      const std::size_t col0 = std::size_t(st.physical_col) * cfg.n_sm;
      const auto& part = partials[c.sm][c.stripe];
      const bool last = pos + 1 == list.size();
      for (std::size_t m = 0; m < rows_real; ++m) {
        for (std::size_t n = 0; n < std::size_t(cfg.n_sm); ++n) {
          float v = part[m * cfg.n_sm + n];
          if (pos > 0) v = v + run.out.C.value(row0 + m, col0 + n);
          Fp16Bits h = fp16_round(v);
          if (last && per_column) h = fp16_mul(h, src.column_scale(col0 + n));
          run.out.C.set(row0 + m, col0 + n, h);
        }
      }
      ++run.out.locks[vc];
    }
  });

  for (const auto& list : order) {
    for (std::size_t pos = 0; pos < list.size(); ++pos) {
      SmTrace& tr = traces[list[pos].sm];
      ++tr.output_writes;
      if (pos > 0) ++tr.reduction_steps;
      if (pos + 1 == list.size() && per_column) ++tr.scale_reloads;
    }
  }
  run.trace.per_sm = std::move(traces);
  run.trace.segments = plan.segments;
  run.trace.b_word_loads.resize(n_words);
  for (std::size_t i = 0; i < n_words; ++i) run.trace.b_word_loads[i] = loads[i].load();
  return run;
}

}  // namespace

GemmRun marlin_gemm(const DenseMatrix& a, const PackedQuantMatrix& b, const TilingConfig& cfg,
                    const StripeAssignment& plan, const SimOptions& opt) {
  return run_engine(a, DenseSource(b), cfg, plan, opt);
}

GemmRun sparse_marlin_gemm(const DenseMatrix& a, const Sparse24Matrix& b, const TilingConfig& cfg,
                           const StripeAssignment& plan, const SimOptions& opt) {
  return run_engine(a, SparseSource(b), cfg, plan, opt);
}

}  // namespace marlinlab::sim
