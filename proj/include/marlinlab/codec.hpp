// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "marlinlab/numerics.hpp"
#include "marlinlab/quantizer.hpp"

namespace marlinlab {

using Word32 = std::uint32_t;
using Nibbles = std::array<std::uint8_t, 8>;

// Interleave inside a 32-bit word. Read from the most significant nibble down,
// the word stores weights 6 4 2 0 7 5 3 1, so packing (0..7) yields 0x64207531.
// Weight 2m sits in nibble 4+m and weight 2m+1 in nibble m: each pair lands at
// the same offset of the two 16-bit halves and decodes in one two-lane step.
constexpr int nibble_position(int weight) { return weight % 2 == 0 ? 4 + weight / 2 : weight / 2; }

Word32 pack_word(const Nibbles& codes);
Nibbles unpack_word(Word32 w);

// INT4 -> FP16 magic-number decode. OR-ing a nibble into the low mantissa of
// 0x6400 (1024.0) gives 1024 + u; subtracting 0x6408 (1032.0) leaves u - 8.
inline constexpr std::uint16_t kDequantMagic = 0x6400;
inline constexpr std::uint16_t kDequantLowSub = 0x6408;   // 1024 + 8
inline constexpr std::uint16_t kDequantHighMul = 0x2C00;  // 1/16
inline constexpr std::uint16_t kDequantHighAdd = 0xD480;  // -(64 + 8)

Fp16Bits decode_slot_fp16(std::uint8_t u);

/// Decodes weights (2p, 2p+1) of a packed word in one emulated two-lane step.
/// Even pairs mask bits 0..3 of each 16-bit half; odd pairs mask bits 4..7 and
/// fold the x16 offset into a fused multiply-add. Pairs 2 and 3 shift the word
/// right by 8 first.
std::pair<Fp16Bits, Fp16Bits> decode_pair(Word32 w, int pair_index);

enum class PackLayout : std::uint8_t { raw = 0, marlin = 1 };

/// Permutation from packed slot to logical position inside one tile.
/// slots[word_in_tile * 8 + nibble] = row * tile_cols + col. Empty for raw.
struct TileOrder {
  std::uint16_t tile_rows = 0;
  std::uint16_t tile_cols = 0;
  std::vector<std::uint16_t> slots;

  bool empty() const { return slots.empty(); }
  std::size_t tile_size() const { return std::size_t{tile_rows} * tile_cols; }
  /// logical position -> slot
  std::vector<std::uint16_t> inverse() const;
  void validate() const;
  friend bool operator==(const TileOrder&, const TileOrder&) = default;
};

/// Packed symmetric 4-bit weights. Stored nibbles are code + 8.
///
/// Marlin layout: B is cut into 16 x 64 tiles (16 rows of K, 64 columns of N),
/// stored tile-row-major (k-tile outer, n-tile inner), 128 words per tile.
/// Inside a tile, word (lane * 4 + block) holds the 8 codes that mma lane
/// `lane` needs from 16 x 16 block `block` (ascending block order), so every
/// lane reads its four words as one 16-byte vector. Raw layout is row-major
/// with code k*N+n in nibble (k*N+n) % 8 of word (k*N+n) / 8.
struct PackedQuantMatrix {
  std::size_t K = 0;
  std::size_t N = 0;
  int group_size = kPerColumn;
  PackLayout layout = PackLayout::raw;
  std::vector<Word32> words;
  std::vector<Fp16Bits> packed_scales;
  TileOrder tile_order;

  std::size_t groups() const;
  double bits_per_weight() const;
  void validate() const;
};

inline constexpr int kTileK = 16;
inline constexpr int kTileN = 64;
inline constexpr int kWordsPerTile = kTileK * kTileN / 8;

struct TileCoord {
  int row;
  int col;
};

/// Position inside a 16 x 64 tile of slot `slot` of lane `lane`, block `block`
/// (the m16n8k16 B-fragment: rows 2q, 2q+1, 2q+8, 2q+9 for q = lane % 4, columns
/// lane / 4 and lane / 4 + 8 of the block).
TileCoord marlin_fragment_coord(int lane, int block, int slot);

TileOrder marlin_tile_order();

/// Index of the scale a lane uses for slot `slot` of block `block`, within its
/// own 8-scale vector.
constexpr int lane_scale_index(int block, int slot) { return 2 * block + slot / 4; }

PackedQuantMatrix repack_marlin(const QuantizedWeights& q);
PackedQuantMatrix pack_raw(const QuantizedWeights& q);

/// Signed code at logical (k, n), resolved through tile_order.
int logical_code_at(const PackedQuantMatrix& p, std::size_t k, std::size_t n);

/// Inverse of repack_marlin / pack_raw.
QuantizedWeights unpack(const PackedQuantMatrix& p);

/// Within every 64-column chunk of a scale row, position 8 * i + j receives
/// column i + 8 * j, so lane group i (lanes 4i..4i+3) finds its 8 scales in one
/// contiguous 16-byte vector. Requires N % 64 == 0.
std::vector<Fp16Bits> repack_scales(std::span<const Fp16Bits> scales, std::size_t groups,
                                    std::size_t n);
std::vector<Fp16Bits> unpack_scales(std::span<const Fp16Bits> packed, std::size_t groups,
                                    std::size_t n);
constexpr std::size_t packed_scale_index(std::size_t n) {
  const std::size_t c = n % 64;
  return n - c + 8 * (c % 8) + c / 8;
}

}  // namespace marlinlab
