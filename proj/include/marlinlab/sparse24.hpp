// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "marlinlab/codec.hpp"
#include "marlinlab/numerics.hpp"
#include "marlinlab/quantizer.hpp"

namespace marlinlab {

/// 2:4 sparse, 4-bit quantized weights in the transposed (N x K) view.
///
/// Values: the kept entries of every group of four along K form an N x K/2
/// matrix of codes (stored as code + 8), cut into 64 x 16 tiles (64 rows of N,
/// 16 compressed columns) ordered compressed-tile outer, n-tile inner, 128
/// words each. Word (lane * 4 + it) holds lane's eight codes of row block `it`
/// (rows 16*it .. 16*it+15): rows g and g+8, columns 2q, 2q+1, 2q+8, 2q+9 for
/// g = lane / 4, q = lane % 4, in the mma left-operand fragment order.
///
/// Metadata: the 2-bit index (position inside its group of four) of
/// compressed column c of row n sits at bits 2 * (c % 16) of logical word
/// (n, c / 16). The stream reorders those words in blocks of 64 rows x 2
/// compressed tiles (128 words): lane L owns words 4L..4L+3 holding row
/// 16 * it + g + 8 * h for the two row blocks `it` of its lane pair, first for
/// compressed tile 0 then 1 (g = L / 4, h = L % 2). With selector 0 lanes 0, 1
/// of each quad carry row blocks 0, 1 and lanes 2, 3 carry blocks 2, 3;
/// selector 1 swaps the two pairs. Blocks are ordered tile-pair outer, n-tile
/// inner.
struct Sparse24Matrix {
  std::size_t N = 0;  // output columns (rows of the transposed weight)
  std::size_t K = 0;  // original reduction depth
  int group_size = kPerColumn;
  int selector = 0;
  std::vector<Word32> values;       // N * K / 16 words
  TileOrder value_order;            // 64 x 16
  std::vector<std::uint32_t> meta;  // N * K / 32 words, reordered stream
  TileOrder meta_order;             // 64 x 2, slot -> row * 2 + compressed tile
  std::vector<Fp16Bits> scales;     // groups x N, packed like repack_scales

  std::size_t groups() const;
  double bits_per_weight() const;
  void validate() const;
};

inline constexpr int kSparseTileRows = 64;
inline constexpr int kSparseTileCols = 16;

/// Keeps the two largest magnitudes of every aligned group of four along K
/// (rows of the K x N matrix); equal magnitudes keep the lower index.
DenseMatrix prune_2of4(const DenseMatrix& w);

/// Applies an externally chosen K x N keep mask; throws unless it is 2:4.
DenseMatrix prune_with_mask(const DenseMatrix& w, std::span<const std::uint8_t> keep);

bool is_2of4(const DenseMatrix& w);

/// Quantizes a pruned K x N matrix (symmetric 4-bit) and builds the values
/// and metadata structures. Groups with fewer than two non-zeros are padded
/// with the lowest unused indices; an all-zero group stores (0, 1).
Sparse24Matrix compress_2of4(const DenseMatrix& pruned, const QuantSpec& spec,
                             std::span<const double> clip_grid = {}, int selector = 0);

TileCoord sparse_fragment_coord(int lane, int row_block, int slot);
TileOrder sparse_value_order();
TileOrder metadata_order(int selector);

/// Logical metadata words (N x K/32, row-major) from per-value indices
/// (N x K/2, row-major).
std::vector<std::uint32_t> metadata_words(std::span<const std::uint8_t> indices, std::size_t n,
                                          std::size_t k);

/// Reorders logical metadata words into the stream layout.
std::vector<std::uint32_t> reorder_metadata(std::span<const std::uint32_t> logical,
                                            std::size_t n, std::size_t k, int selector);

/// Inverse of reorder_metadata, driven by a stored permutation.
std::vector<std::uint32_t> restore_metadata(std::span<const std::uint32_t> stream,
                                            std::size_t n, std::size_t k, const TileOrder& order);

/// Stream position of logical metadata word (row, compressed tile).
std::size_t meta_stream_index(std::size_t n_total, std::size_t row, std::size_t ctile,
                              int selector);

/// Signed code of compressed value (n, c) and its index inside its group.
int sparse_code_at(const Sparse24Matrix& s, std::size_t n, std::size_t c);
int sparse_index_at(const Sparse24Matrix& s, std::size_t n, std::size_t c);

/// Scatters values back to K x N codes (zeros elsewhere) with the scales
/// unpacked. Throws on metadata that is not strictly increasing per group.
QuantizedWeights expand_codes(const Sparse24Matrix& s);

/// Dequantized dense K x N matrix.
DenseMatrix decompress(const Sparse24Matrix& s);

}  // namespace marlinlab
