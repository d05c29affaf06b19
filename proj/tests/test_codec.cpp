// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <set>

#include "marlinlab/codec.hpp"
#include "oracles.hpp"

using namespace marlinlab;

namespace {

QuantizedWeights random_codes(Rng& rng, std::size_t k, std::size_t n, int group) {
  QuantizedWeights q;
  q.K = k;
  q.N = n;
  q.spec = {4, group, true};
  q.codes.resize(k * n);
  for (auto& c : q.codes) c = static_cast<std::int8_t>(rng.range(-8, 7));
  q.scales.resize(q.groups() * n);
  for (auto& s : q.scales) s = fp16_round(rng.uniform(0.01, 0.2));
  return q;
}

void check_same(const QuantizedWeights& a, const QuantizedWeights& b) {
  CHECK(a.K == b.K);
  CHECK(a.N == b.N);
  CHECK(a.spec.group_size == b.spec.group_size);
  CHECK(a.codes == b.codes);
  CHECK(a.scales == b.scales);
}

}  // namespace

TEST_CASE("interleaved packing of eight nibbles") {
  CHECK(pack_word({0, 1, 2, 3, 4, 5, 6, 7}) == 0x64207531u);
  const Nibbles back = unpack_word(0x64207531u);
  for (int i = 0; i < 8; ++i) CHECK(back[i] == i);

  // Nibble 1 holds weight 3.
  const Nibbles one = unpack_word(0x00000010u);
  for (int i = 0; i < 8; ++i) CHECK(one[i] == (i == 3 ? 1 : 0));

  for (int w = 0; w < 8; ++w) {
    Nibbles n{};
    n[w] = 0xF;
    CHECK(pack_word(n) == (0xFu << (4 * nibble_position(w))));
  }

  Rng rng(1);
  for (int t = 0; t < 2000; ++t) {
    const Word32 w = static_cast<Word32>(rng.next());
    CHECK(pack_word(unpack_word(w)) == w);
  }
}

TEST_CASE("magic-number decode of every nibble value") {
  for (int u = 0; u < 16; ++u) CHECK(decode_slot_fp16(static_cast<std::uint8_t>(u)) == fp16_round(u - 8));
  CHECK(to_double(Fp16Bits{kDequantMagic}) == 1024.0);
  CHECK(to_double(Fp16Bits{kDequantLowSub}) == 1032.0);
  CHECK(to_double(Fp16Bits{kDequantHighMul}) == 0.0625);
  CHECK(to_double(Fp16Bits{kDequantHighAdd}) == -72.0);
}

TEST_CASE("decode_pair yields weights 2p and 2p+1") {
  const auto [lo0, hi0] = decode_pair(0x64207531u, 0);
  CHECK(to_double(lo0) == -8.0);
  CHECK(to_double(hi0) == -7.0);
  for (int p = 0; p < 4; ++p) {
    const auto [a, b] = decode_pair(0x64207531u, p);
    CHECK(to_double(a) == 2 * p - 8);
    CHECK(to_double(b) == 2 * p + 1 - 8);
  }
  Rng rng(2);
  for (int t = 0; t < 5000; ++t) {
    Nibbles n;
    for (auto& x : n) x = static_cast<std::uint8_t>(rng.below(16));
    const Word32 w = pack_word(n);
    for (int p = 0; p < 4; ++p) {
      const auto [a, b] = decode_pair(w, p);
      REQUIRE(to_double(a) == n[2 * p] - 8);
      REQUIRE(to_double(b) == n[2 * p + 1] - 8);
    }
  }
  CHECK_THROWS_AS(decode_pair(0, 4), Error);
}

TEST_CASE("marlin tile order is a bijection over the 16 x 64 tile") {
  const TileOrder order = marlin_tile_order();
  CHECK_NOTHROW(order.validate());
  CHECK(order.tile_size() == 1024);
  std::set<int> seen(order.slots.begin(), order.slots.end());
  CHECK(seen.size() == 1024);
  const auto inv = order.inverse();
  for (std::size_t s = 0; s < order.slots.size(); ++s) CHECK(inv[order.slots[s]] == s);

  // Lane 0 block 0 covers rows 0, 1, 8, 9 of columns 0 and 8.
  CHECK(marlin_fragment_coord(0, 0, 0).row == 0);
  CHECK(marlin_fragment_coord(0, 0, 3).row == 9);
  CHECK(marlin_fragment_coord(0, 0, 4).col == 8);
  CHECK(marlin_fragment_coord(5, 2, 1).row == 3);
  CHECK(marlin_fragment_coord(5, 2, 1).col == 33);

  TileOrder bad = order;
  bad.slots[1] = bad.slots[0];
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("repack_marlin places codes per the fragment layout") {
  Rng rng(3);
  const QuantizedWeights q = random_codes(rng, 128, 192, 64);
  const PackedQuantMatrix p = repack_marlin(q);
  CHECK_NOTHROW(p.validate());
  REQUIRE(p.words.size() == 128 * 192 / 8);
  const std::size_t n_tiles = 192 / 64;
  for (std::size_t kt = 0; kt < 128 / 16; ++kt) {
    for (std::size_t nt = 0; nt < n_tiles; ++nt) {
      const std::size_t base = (kt * n_tiles + nt) * 128;
      for (int lane = 0; lane < 32; ++lane) {
        for (int block = 0; block < 4; ++block) {
          const Word32 w = p.words[base + lane * 4 + block];
          const int g = lane / 4, qd = lane % 4;
          for (int slot = 0; slot < 8; ++slot) {
            const int row = 2 * qd + (slot % 2) + 8 * ((slot % 4) / 2);
            const int col = 16 * block + g + 8 * (slot / 4);
            const int nib = slot % 2 == 0 ? 4 + slot / 2 : slot / 2;
            const int stored = (w >> (4 * nib)) & 0xF;
            REQUIRE(stored - 8 == q.code(kt * 16 + row, nt * 64 + col));
          }
        }
      }
    }
  }
  for (int t = 0; t < 500; ++t) {
    const std::size_t k = rng.below(128), n = rng.below(192);
    CHECK(logical_code_at(p, k, n) == q.code(k, n));
  }
  check_same(unpack(p), q);
}

TEST_CASE("raw packing is row-major without interleave") {
  Rng rng(4);
  const QuantizedWeights q = random_codes(rng, 64, 32, kPerColumn);
  const PackedQuantMatrix p = pack_raw(q);
  CHECK(p.tile_order.empty());
  for (std::size_t i = 0; i < q.codes.size(); ++i) {
    const Word32 w = p.words[i / 8];
    CHECK(int((w >> (4 * (i % 8))) & 0xF) - 8 == q.codes[i]);
  }
  check_same(unpack(p), q);
}

TEST_CASE("64 x 64 matrix packs into 512 words, constant codes give identical words") {
  QuantizedWeights q;
  q.K = 64;
  q.N = 64;
  q.spec = {4, kPerColumn, true};
  q.codes.assign(64 * 64, 3);
  q.scales.assign(64, kFp16One);
  const PackedQuantMatrix p = repack_marlin(q);
  CHECK(p.words.size() == 512);
  for (Word32 w : p.words) CHECK(w == 0xBBBBBBBBu);
  CHECK(p.bits_per_weight() == doctest::Approx(4.0 + 16.0 / 64));
}

TEST_CASE("scale repack") {
  CHECK(packed_scale_index(0) == 0);
  CHECK(packed_scale_index(1) == 8);
  CHECK(packed_scale_index(8) == 1);
  CHECK(packed_scale_index(63) == 63);
  CHECK(packed_scale_index(64 + 9) == 64 + 9);
  std::set<std::size_t> seen;
  for (std::size_t c = 0; c < 128; ++c) seen.insert(packed_scale_index(c));
  CHECK(seen.size() == 128);

  Rng rng(5);
  std::vector<Fp16Bits> s(3 * 128);
  for (auto& x : s) x = fp16_round(rng.uniform(0.1, 1));
  const auto packed = repack_scales(s, 3, 128);
  for (std::size_t g = 0; g < 3; ++g) {
    for (std::size_t c = 0; c < 128; ++c) CHECK(packed[g * 128 + packed_scale_index(c)] == s[g * 128 + c]);
  }
  CHECK(unpack_scales(packed, 3, 128) == s);

  // Lane group i reads columns i, i + 8, ..., i + 56 in one vector.
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) CHECK(packed[8 * i + j] == s[i + 8 * j]);
  }
  // Slots 0..3 of block b use column 16b + g, slots 4..7 column 16b + g + 8.
  for (int block = 0; block < 4; ++block) {
    for (int slot = 0; slot < 8; ++slot) {
      const int col = marlin_fragment_coord(0, block, slot).col;
      CHECK(col % 8 == 0);
      CHECK(lane_scale_index(block, slot) == col / 8);
    }
  }
  CHECK_THROWS_AS(repack_scales(std::vector<Fp16Bits>(40), 1, 40), Error);
}

TEST_CASE("packing rejects out-of-range shapes and codes") {
  Rng rng(6);
  QuantizedWeights q = random_codes(rng, 64, 48, kPerColumn);
  CHECK_THROWS_AS(repack_marlin(q), Error);
  CHECK_NOTHROW(pack_raw(q));
  PackedQuantMatrix p = repack_marlin(random_codes(rng, 64, 64, 64));
  p.words.pop_back();
  CHECK_THROWS_AS(p.validate(), Error);
}
