// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "marlinlab/codec.hpp"

#include <string>

namespace marlinlab {

Word32 pack_word(const Nibbles& codes) {
  Word32 w = 0;
  for (int i = 0; i < 8; ++i) {
    require(codes[i] <= 15, "pack_word: code out of range 0..15");
    w |= Word32{codes[i]} << (4 * nibble_position(i));
  }
  return w;
}

Nibbles unpack_word(Word32 w) {
  Nibbles out{};
  for (int i = 0; i < 8; ++i) out[i] = (w >> (4 * nibble_position(i))) & 0xFu;
  return out;
}

Fp16Bits decode_slot_fp16(std::uint8_t u) {
  const Fp16Bits biased{static_cast<std::uint16_t>((u & 0xFu) | kDequantMagic)};
  return fp16_sub(biased, Fp16Bits{kDequantLowSub});
}

std::pair<Fp16Bits, Fp16Bits> decode_pair(Word32 w, int pair_index) {
  require(pair_index >= 0 && pair_index < 4, "decode_pair: pair index must be 0..3");
  constexpr Word32 kLowMask = 0x000F000Fu;
  constexpr Word32 kHighMask = 0x00F000F0u;
  constexpr Word32 kMagic2 = (Word32{kDequantMagic} << 16) | kDequantMagic;

  const Word32 q = w >> (8 * (pair_index / 2));
  Fp16Bits lo, hi;
  if (pair_index % 2 == 0) {
    const Word32 r = (q & kLowMask) | kMagic2;
    lo = fp16_sub(Fp16Bits{static_cast<std::uint16_t>(r)}, Fp16Bits{kDequantLowSub});
    hi = fp16_sub(Fp16Bits{static_cast<std::uint16_t>(r >> 16)}, Fp16Bits{kDequantLowSub});
  } else {
    // Halves hold 1024 + 16u: (1024 + 16u) / 16 - 72 = u - 8.
    const Word32 r = (q & kHighMask) | kMagic2;
    lo = fp16_fma(Fp16Bits{static_cast<std::uint16_t>(r)}, Fp16Bits{kDequantHighMul},
                  Fp16Bits{kDequantHighAdd});
    hi = fp16_fma(Fp16Bits{static_cast<std::uint16_t>(r >> 16)}, Fp16Bits{kDequantHighMul},
                  Fp16Bits{kDequantHighAdd});
  }
  // Weight 2p lives in the high half, weight 2p+1 in the low half.
  return {hi, lo};
}

std::vector<std::uint16_t> TileOrder::inverse() const {
  std::vector<std::uint16_t> inv(slots.size());
  for (std::size_t s = 0; s < slots.size(); ++s) inv[slots[s]] = static_cast<std::uint16_t>(s);
  return inv;
}

void TileOrder::validate() const {
  if (slots.empty()) return;
  require(slots.size() == tile_size(), "tile order: slot table does not match tile shape");
  std::vector<bool> seen(slots.size(), false);
  for (auto s : slots) {
    require(s < slots.size() && !seen[s], "tile order: slot table is not a permutation");
    seen[s] = true;
  }
}

TileCoord marlin_fragment_coord(int lane, int block, int slot) {
  const int g = lane / 4, q = lane % 4;
  static constexpr int kRowOffset[4] = {0, 1, 8, 9};
  return TileCoord{2 * q + kRowOffset[slot % 4], 16 * block + g + 8 * (slot / 4)};
}

TileOrder marlin_tile_order() {
  TileOrder order;
  order.tile_rows = kTileK;
  order.tile_cols = kTileN;
  order.slots.resize(kTileK * kTileN);
  for (int lane = 0; lane < 32; ++lane) {
    for (int block = 0; block < 4; ++block) {
      const int word = lane * 4 + block;
      for (int slot = 0; slot < 8; ++slot) {
        const TileCoord c = marlin_fragment_coord(lane, block, slot);
        order.slots[word * 8 + nibble_position(slot)] =
            static_cast<std::uint16_t>(c.row * kTileN + c.col);
      }
    }
  }
  return order;
}

std::size_t PackedQuantMatrix::groups() const {
  const std::size_t g = group_size == kPerColumn ? K : static_cast<std::size_t>(group_size);
  return g == 0 ? 0 : (K + g - 1) / g;
}

double PackedQuantMatrix::bits_per_weight() const {
  return (32.0 * words.size() + 16.0 * packed_scales.size()) / (double(K) * double(N));
}

void PackedQuantMatrix::validate() const {
  require(K > 0 && N > 0, "packed matrix: empty shape");
  require(group_size == kPerColumn || (group_size > 0 && group_size % 16 == 0 &&
                                       K % static_cast<std::size_t>(group_size) == 0),
          "packed matrix: invalid group size");
  require(words.size() == K * N / 8, "packed matrix: word count must be K*N/8");
  require(packed_scales.size() == groups() * N, "packed matrix: scale count mismatch");
  tile_order.validate();
  if (layout == PackLayout::marlin) {
    require(K % 64 == 0 && N % 64 == 0, "packed matrix: marlin layout needs K, N divisible by 64");
    require(tile_order.tile_rows == kTileK && tile_order.tile_cols == kTileN,
            "packed matrix: marlin layout needs a 16x64 tile order");
  } else {
    require(K % 64 == 0 && N % 16 == 0, "packed matrix: raw layout needs K % 64 == 0, N % 16 == 0");
    require(tile_order.empty(), "packed matrix: raw layout carries no tile order");
  }
}

namespace {

std::uint8_t stored_nibble(int code) {
  require(code >= -8 && code <= 7, "packing: code out of 4-bit signed range");
  return static_cast<std::uint8_t>(code + 8);
}

void require_packable(const QuantizedWeights& q) {
  q.validate();
  require(q.spec.symmetric && q.spec.bits == 4, "packing: only symmetric 4-bit weights pack");
}

}  // namespace

PackedQuantMatrix repack_marlin(const QuantizedWeights& q) {
  require_packable(q);
  require(q.K % 64 == 0 && q.N % 64 == 0, "repack_marlin: K and N must be divisible by 64");

  PackedQuantMatrix p;
  p.K = q.K;
  p.N = q.N;
  p.group_size = q.spec.group_size;
  p.layout = PackLayout::marlin;
  p.tile_order = marlin_tile_order();
  p.words.assign(q.K * q.N / 8, 0);

  const std::size_t n_tiles = q.N / kTileN;
  for (std::size_t kt = 0; kt < q.K / kTileK; ++kt) {
    for (std::size_t nt = 0; nt < n_tiles; ++nt) {
      Word32* tile = p.words.data() + (kt * n_tiles + nt) * kWordsPerTile;
      for (int lane = 0; lane < 32; ++lane) {
        for (int block = 0; block < 4; ++block) {
          Nibbles codes{};
          for (int slot = 0; slot < 8; ++slot) {
            const TileCoord c = marlin_fragment_coord(lane, block, slot);
            codes[slot] = stored_nibble(q.code(kt * kTileK + c.row, nt * kTileN + c.col));
          }
          tile[lane * 4 + block] = pack_word(codes);
        }
      }
    }
  }
  p.packed_scales = repack_scales(q.scales, q.groups(), q.N);
  return p;
}

PackedQuantMatrix pack_raw(const QuantizedWeights& q) {
  require_packable(q);
  require(q.K % 64 == 0 && q.N % 16 == 0, "pack_raw: K % 64 and N % 16 must be 0");
  PackedQuantMatrix p;
  p.K = q.K;
  p.N = q.N;
  p.group_size = q.spec.group_size;
  p.layout = PackLayout::raw;
  p.words.assign(q.K * q.N / 8, 0);
  for (std::size_t f = 0; f < q.K * q.N; ++f) {
    p.words[f / 8] |= Word32{stored_nibble(q.codes[f])} << (4 * (f % 8));
  }
  p.packed_scales = q.scales;
  return p;
}

int logical_code_at(const PackedQuantMatrix& p, std::size_t k, std::size_t n) {
  require(k < p.K && n < p.N, "logical_code_at: index out of range");
  if (p.layout == PackLayout::raw) {
    const std::size_t f = k * p.N + n;
    return static_cast<int>((p.words[f / 8] >> (4 * (f % 8))) & 0xFu) - 8;
  }
  const std::size_t tr = p.tile_order.tile_rows, tc = p.tile_order.tile_cols;
  const std::size_t tile = (k / tr) * (p.N / tc) + n / tc;
  const std::uint16_t pos = static_cast<std::uint16_t>((k % tr) * tc + n % tc);
  // Linear scan keeps this lookup independent of any cached inverse.
  std::size_t slot = 0;
  while (p.tile_order.slots[slot] != pos) ++slot;
  const Word32 w = p.words[tile * (tr * tc / 8) + slot / 8];
  return static_cast<int>((w >> (4 * (slot % 8))) & 0xFu) - 8;
}

QuantizedWeights unpack(const PackedQuantMatrix& p) {
  p.validate();
  QuantizedWeights q;
  q.K = p.K;
  q.N = p.N;
  q.spec = QuantSpec{4, p.group_size, true};
  q.codes.assign(p.K * p.N, 0);

  if (p.layout == PackLayout::raw) {
    for (std::size_t f = 0; f < p.K * p.N; ++f) {
      q.codes[f] = static_cast<std::int8_t>(((p.words[f / 8] >> (4 * (f % 8))) & 0xFu) - 8);
    }
    q.scales = p.packed_scales;
  } else {
    const std::size_t tr = p.tile_order.tile_rows, tc = p.tile_order.tile_cols;
    const std::size_t n_tiles = p.N / tc, per_tile = tr * tc;
    for (std::size_t t = 0; t < p.words.size() / (per_tile / 8); ++t) {
      const std::size_t k0 = (t / n_tiles) * tr, n0 = (t % n_tiles) * tc;
      for (std::size_t s = 0; s < per_tile; ++s) {
        const Word32 w = p.words[t * (per_tile / 8) + s / 8];
        const std::size_t pos = p.tile_order.slots[s];
        q.codes[(k0 + pos / tc) * p.N + n0 + pos % tc] =
            static_cast<std::int8_t>(((w >> (4 * (s % 8))) & 0xFu) - 8);
      }
    }
    q.scales = unpack_scales(p.packed_scales, p.groups(), p.N);
  }
  q.validate();
  return q;
}

std::vector<Fp16Bits> repack_scales(std::span<const Fp16Bits> scales, std::size_t groups,
                                    std::size_t n) {
  require(scales.size() == groups * n, "repack_scales: scale array does not match groups x N");
  require(n % 64 == 0, "repack_scales: N must be divisible by 64");
  std::vector<Fp16Bits> out(scales.size());
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t c = 0; c < n; ++c) out[g * n + packed_scale_index(c)] = scales[g * n + c];
  }
  return out;
}

std::vector<Fp16Bits> unpack_scales(std::span<const Fp16Bits> packed, std::size_t groups,
                                    std::size_t n) {
  require(packed.size() == groups * n, "unpack_scales: scale array does not match groups x N");
  require(n % 64 == 0, "unpack_scales: N must be divisible by 64");
  std::vector<Fp16Bits> out(packed.size());
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t c = 0; c < n; ++c) out[g * n + c] = packed[g * n + packed_scale_index(c)];
  }
  return out;
}

}  // namespace marlinlab
