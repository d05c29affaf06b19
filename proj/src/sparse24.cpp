// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "marlinlab/sparse24.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "marlinlab/error.hpp"

namespace marlinlab {

namespace {

constexpr std::size_t kValueWordsPerTile = kSparseTileRows * kSparseTileCols / 8;
constexpr std::size_t kMetaBlockWords = 128;

void require_sparse_shape(std::size_t k, std::size_t n, const char* who) {
  require(k > 0 && n > 0 && k % 64 == 0 && n % 64 == 0,
          std::string(who) + ": K and N must be positive multiples of 64");
}

}  // namespace

std::size_t Sparse24Matrix::groups() const {
  const std::size_t g = group_size == kPerColumn ? K : static_cast<std::size_t>(group_size);
  return g == 0 ? 0 : (K + g - 1) / g;
}

double Sparse24Matrix::bits_per_weight() const {
  return (32.0 * values.size() + 32.0 * meta.size() + 16.0 * scales.size()) /
         (double(K) * double(N));
}

void Sparse24Matrix::validate() const {
  require_sparse_shape(K, N, "sparse matrix");
  require(group_size == kPerColumn ||
              (group_size > 0 && group_size % 16 == 0 && K % std::size_t(group_size) == 0),
          "sparse matrix: invalid group size");
  require(selector == 0 || selector == 1, "sparse matrix: selector must be 0 or 1");
  require(values.size() == N * K / 16, "sparse matrix: value word count must be N*K/16");
  require(meta.size() == N * K / 32, "sparse matrix: metadata word count must be N*K/32");
  require(scales.size() == groups() * N, "sparse matrix: scale count mismatch");
  require(value_order.tile_rows == kSparseTileRows && value_order.tile_cols == kSparseTileCols,
          "sparse matrix: value order must describe 64x16 tiles");
  require(meta_order.tile_rows == 64 && meta_order.tile_cols == 2,
          "sparse matrix: metadata order must describe 64x2 blocks");
  value_order.validate();
  meta_order.validate();
}

DenseMatrix prune_2of4(const DenseMatrix& w) {
  require(w.rows() % 4 == 0, "prune_2of4: K must be divisible by 4");
  DenseMatrix out(w.rows(), w.cols());
  for (std::size_t n = 0; n < w.cols(); ++n) {
    for (std::size_t k0 = 0; k0 < w.rows(); k0 += 4) {
      std::array<int, 4> idx{0, 1, 2, 3};
      std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return std::fabs(w.value(k0 + a, n)) > std::fabs(w.value(k0 + b, n));
      });
      out.set(k0 + idx[0], n, w.at(k0 + idx[0], n));
      out.set(k0 + idx[1], n, w.at(k0 + idx[1], n));
    }
  }
  return out;
}

DenseMatrix prune_with_mask(const DenseMatrix& w, std::span<const std::uint8_t> keep) {
  require(keep.size() == w.size(), "prune_with_mask: mask size differs from matrix size");
  require(w.rows() % 4 == 0, "prune_with_mask: K must be divisible by 4");
  DenseMatrix out(w.rows(), w.cols());
  for (std::size_t n = 0; n < w.cols(); ++n) {
    for (std::size_t k0 = 0; k0 < w.rows(); k0 += 4) {
      int kept = 0;
      for (std::size_t i = 0; i < 4; ++i) {
        if (keep[(k0 + i) * w.cols() + n] == 0) continue;
        ++kept;
        out.set(k0 + i, n, w.at(k0 + i, n));
      }
      require(kept <= 2, "prune_with_mask: mask keeps more than 2 of 4");
    }
  }
  return out;
}

bool is_2of4(const DenseMatrix& w) {
  if (w.rows() % 4 != 0) return false;
  for (std::size_t n = 0; n < w.cols(); ++n) {
    for (std::size_t k0 = 0; k0 < w.rows(); k0 += 4) {
      int nz = 0;
      for (std::size_t i = 0; i < 4; ++i) nz += w.at(k0 + i, n).is_zero() ? 0 : 1;
      if (nz > 2) return false;
    }
  }
  return true;
}

TileCoord sparse_fragment_coord(int lane, int row_block, int slot) {
  const int g = lane / 4, q = lane % 4;
  return TileCoord{16 * row_block + g + 8 * ((slot / 2) % 2), 2 * q + slot % 2 + 8 * (slot / 4)};
}

TileOrder sparse_value_order() {
  TileOrder order;
  order.tile_rows = kSparseTileRows;
  order.tile_cols = kSparseTileCols;
  order.slots.resize(kSparseTileRows * kSparseTileCols);
  for (int lane = 0; lane < 32; ++lane) {
    for (int it = 0; it < 4; ++it) {
      for (int slot = 0; slot < 8; ++slot) {
        const TileCoord c = sparse_fragment_coord(lane, it, slot);
        order.slots[(lane * 4 + it) * 8 + nibble_position(slot)] =
            static_cast<std::uint16_t>(c.row * kSparseTileCols + c.col);
      }
    }
  }
  return order;
}

TileOrder metadata_order(int selector) {
  require(selector == 0 || selector == 1, "metadata_order: selector must be 0 or 1");
  TileOrder order;
  order.tile_rows = 64;
  order.tile_cols = 2;
  order.slots.resize(kMetaBlockWords);
  for (int lane = 0; lane < 32; ++lane) {
    const int g = lane / 4, s = lane % 4;
    const int pair = (s / 2) ^ selector;
    for (int e = 0; e < 4; ++e) {
      const int it = 2 * pair + e % 2;
      const int row = 16 * it + g + 8 * (s % 2);
      order.slots[lane * 4 + e] = static_cast<std::uint16_t>(row * 2 + e / 2);
    }
  }
  return order;
}

std::vector<std::uint32_t> metadata_words(std::span<const std::uint8_t> indices, std::size_t n,
                                          std::size_t k) {
  require(k % 32 == 0, "metadata_words: K must be divisible by 32");
  require(indices.size() == n * k / 2, "metadata_words: expected N*K/2 indices");
  const std::size_t cols = k / 2, words_per_row = k / 32;
  std::vector<std::uint32_t> out(n * words_per_row, 0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::uint8_t v = indices[r * cols + c];
      require(v < 4, "metadata_words: index out of range 0..3");
      out[r * words_per_row + c / 16] |= std::uint32_t{v} << (2 * (c % 16));
    }
  }
  return out;
}

std::size_t meta_stream_index(std::size_t n_total, std::size_t row, std::size_t ctile,
                              int selector) {
  static const std::array<std::vector<std::uint16_t>, 2> inverse{metadata_order(0).inverse(),
                                                                 metadata_order(1).inverse()};
  const std::size_t block = (ctile / 2) * (n_total / 64) + row / 64;
  const std::size_t local = (row % 64) * 2 + ctile % 2;
  return block * kMetaBlockWords + inverse.at(selector)[local];
}

std::vector<std::uint32_t> reorder_metadata(std::span<const std::uint32_t> logical,
                                            std::size_t n, std::size_t k, int selector) {
  require_sparse_shape(k, n, "reorder_metadata");
  require(logical.size() == n * k / 32, "reorder_metadata: expected N*K/32 words");
  const std::size_t ctiles = k / 32;
  std::vector<std::uint32_t> out(logical.size());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t ct = 0; ct < ctiles; ++ct) {
      out[meta_stream_index(n, r, ct, selector)] = logical[r * ctiles + ct];
    }
  }
  return out;
}

std::vector<std::uint32_t> restore_metadata(std::span<const std::uint32_t> stream,
                                            std::size_t n, std::size_t k, const TileOrder& order) {
  require_sparse_shape(k, n, "restore_metadata");
  require(stream.size() == n * k / 32, "restore_metadata: expected N*K/32 words");
  require(order.tile_rows == 64 && order.tile_cols == 2 && order.slots.size() == kMetaBlockWords,
          "restore_metadata: order must describe 64x2 blocks");
  order.validate();
  const std::size_t ctiles = k / 32, n_blocks = n / 64;
  std::vector<std::uint32_t> out(stream.size());
  for (std::size_t w = 0; w < stream.size(); ++w) {
    const std::size_t block = w / kMetaBlockWords;
    const std::size_t local = order.slots[w % kMetaBlockWords];
    const std::size_t row = (block % n_blocks) * 64 + local / 2;
    const std::size_t ct = (block / n_blocks) * 2 + local % 2;
    out[row * ctiles + ct] = stream[w];
  }
  return out;
}

Sparse24Matrix compress_2of4(const DenseMatrix& pruned, const QuantSpec& spec,
                             std::span<const double> clip_grid, int selector) {
  const std::size_t K = pruned.rows(), N = pruned.cols();
  require_sparse_shape(K, N, "compress_2of4");
  require(spec.symmetric && spec.bits == 4, "compress_2of4: only symmetric 4-bit weights");
  require(spec.group_size == kPerColumn || spec.group_size % 16 == 0,
          "compress_2of4: group size must be a multiple of 16");
  require(selector == 0 || selector == 1, "compress_2of4: selector must be 0 or 1");

  const QuantizedWeights q = quantize_symmetric(pruned, spec, clip_grid);
  const std::size_t cols = K / 2;
  std::vector<std::int8_t> kept(N * cols);
  std::vector<std::uint8_t> indices(N * cols);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t k0 = 0; k0 < K; k0 += 4) {
      std::array<int, 2> idx{};
      int count = 0;
      for (int i = 0; i < 4; ++i) {
        if (pruned.at(k0 + i, n).is_zero()) continue;
        require(count < 2, "compress_2of4: input violates the 2:4 pattern");
        idx[count++] = i;
      }
      for (int i = 0; count < 2; ++i) {
        if (count == 1 && idx[0] == i) continue;
        idx[count++] = i;
      }
      std::sort(idx.begin(), idx.end());
      const std::size_t c = k0 / 2;
      for (int j = 0; j < 2; ++j) {
        kept[n * cols + c + j] = static_cast<std::int8_t>(q.code(k0 + idx[j], n));
        indices[n * cols + c + j] = static_cast<std::uint8_t>(idx[j]);
      }
    }
  }

  Sparse24Matrix s;
  s.N = N;
  s.K = K;
  s.group_size = spec.group_size;
  s.selector = selector;
  s.value_order = sparse_value_order();
  s.meta_order = metadata_order(selector);
  s.values.assign(N * K / 16, 0);
  const std::size_t n_tiles = N / kSparseTileRows;
  for (std::size_t ct = 0; ct < cols / kSparseTileCols; ++ct) {
    for (std::size_t nt = 0; nt < n_tiles; ++nt) {
      Word32* tile = s.values.data() + (ct * n_tiles + nt) * kValueWordsPerTile;
      for (int lane = 0; lane < 32; ++lane) {
        for (int it = 0; it < 4; ++it) {
          Nibbles codes{};
          for (int slot = 0; slot < 8; ++slot) {
            const TileCoord c = sparse_fragment_coord(lane, it, slot);
            const int code = kept[(nt * kSparseTileRows + c.row) * cols + ct * kSparseTileCols + c.col];
            codes[slot] = static_cast<std::uint8_t>(code + 8);
          }
          tile[lane * 4 + it] = pack_word(codes);
        }
      }
    }
  }
  s.meta = reorder_metadata(metadata_words(indices, N, K), N, K, selector);
  s.scales = repack_scales(q.scales, q.groups(), N);
  return s;
}

int sparse_code_at(const Sparse24Matrix& s, std::size_t n, std::size_t c) {
  require(n < s.N && c < s.K / 2, "sparse_code_at: index out of range");
  const std::size_t tile = (c / kSparseTileCols) * (s.N / kSparseTileRows) + n / kSparseTileRows;
  const std::uint16_t pos =
      static_cast<std::uint16_t>((n % kSparseTileRows) * kSparseTileCols + c % kSparseTileCols);
  std::size_t slot = 0;
  while (s.value_order.slots[slot] != pos) ++slot;
  const Word32 w = s.values[tile * kValueWordsPerTile + slot / 8];
  return static_cast<int>((w >> (4 * (slot % 8))) & 0xFu) - 8;
}

int sparse_index_at(const Sparse24Matrix& s, std::size_t n, std::size_t c) {
  require(n < s.N && c < s.K / 2, "sparse_index_at: index out of range");
  const std::size_t ct = c / kSparseTileCols;
  const std::size_t block = (ct / 2) * (s.N / 64) + n / 64;
  const std::uint16_t local = static_cast<std::uint16_t>((n % 64) * 2 + ct % 2);
  std::size_t slot = 0;
  while (s.meta_order.slots[slot] != local) ++slot;
  const std::uint32_t w = s.meta[block * kMetaBlockWords + slot];
  return static_cast<int>((w >> (2 * (c % 16))) & 0x3u);
}

QuantizedWeights expand_codes(const Sparse24Matrix& s) {
  s.validate();
  const std::size_t cols = s.K / 2;
  const auto logical_meta = restore_metadata(s.meta, s.N, s.K, s.meta_order);
  const auto value_pos = s.value_order.slots;
  const std::size_t n_tiles = s.N / kSparseTileRows;

  std::vector<std::int8_t> kept(s.N * cols);
  for (std::size_t t = 0; t < s.values.size() / kValueWordsPerTile; ++t) {
    const std::size_t c0 = (t / n_tiles) * kSparseTileCols, n0 = (t % n_tiles) * kSparseTileRows;
    for (std::size_t slot = 0; slot < kSparseTileRows * kSparseTileCols; ++slot) {
      const Word32 w = s.values[t * kValueWordsPerTile + slot / 8];
      const std::size_t pos = value_pos[slot];
      kept[(n0 + pos / kSparseTileCols) * cols + c0 + pos % kSparseTileCols] =
          static_cast<std::int8_t>(((w >> (4 * (slot % 8))) & 0xFu) - 8);
    }
  }

  QuantizedWeights q;
  q.K = s.K;
  q.N = s.N;
  q.spec = QuantSpec{4, s.group_size, true};
  q.codes.assign(s.K * s.N, 0);
  const std::size_t ctiles = s.K / 32;
  for (std::size_t n = 0; n < s.N; ++n) {
    for (std::size_t c = 0; c < cols; c += 2) {
      const std::uint32_t w = logical_meta[n * ctiles + c / 16];
      const int i0 = (w >> (2 * (c % 16))) & 0x3u;
      const int i1 = (w >> (2 * (c % 16 + 1))) & 0x3u;
      require(i0 < i1, "expand_codes: metadata indices must be strictly increasing");
      const std::size_t k0 = 2 * c;
      q.codes[(k0 + i0) * s.N + n] = kept[n * cols + c];
      q.codes[(k0 + i1) * s.N + n] = kept[n * cols + c + 1];
    }
  }
  q.scales = unpack_scales(s.scales, s.groups(), s.N);
  q.validate();
  return q;
}

DenseMatrix decompress(const Sparse24Matrix& s) { return dequantize(expand_codes(s)); }

}  // namespace marlinlab
