// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>

#include "marlinlab/io.hpp"
#include "marlinlab/sparse24.hpp"
#include "oracles.hpp"

using namespace marlinlab;

namespace {

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return std::uint32_t(b[at]) | std::uint32_t(b[at + 1]) << 8 | std::uint32_t(b[at + 2]) << 16 |
         std::uint32_t(b[at + 3]) << 24;
}

void check_same(const PackedQuantMatrix& a, const PackedQuantMatrix& b) {
  CHECK(a.K == b.K);
  CHECK(a.N == b.N);
  CHECK(a.group_size == b.group_size);
  CHECK(a.layout == b.layout);
  CHECK(a.words == b.words);
  CHECK(a.packed_scales == b.packed_scales);
  CHECK(a.tile_order == b.tile_order);
}

}  // namespace

TEST_CASE("f16m round trip and header") {
  Rng rng(61);
  const DenseMatrix m = oracles::random_matrix(rng, 5, 7, -100, 100);
  const auto bytes = io::encode_f16m(m);
  CHECK(bytes.size() == 16 + 2 * 35);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "F16M");
  CHECK(read_u32(bytes, 4) == 1);
  CHECK(read_u32(bytes, 8) == 5);
  CHECK(read_u32(bytes, 12) == 7);
  CHECK(bytes[16] == (m.at(0, 0).bits & 0xFF));
  CHECK(io::decode_f16m(bytes) == m);
}

TEST_CASE("f16m rejects malformed input") {
  const auto good = io::encode_f16m(DenseMatrix::filled(2, 2, 1.0));
  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(io::decode_f16m(bad), doctest::Contains("magic"), Error);
  bad = good;
  bad.pop_back();
  CHECK_THROWS_AS(io::decode_f16m(bad), Error);
  bad = good;
  bad.push_back(0);
  CHECK_THROWS_AS(io::decode_f16m(bad), Error);
  bad = good;
  bad[16] = 0x00;
  bad[17] = 0x7C;  // infinity
  CHECK_THROWS_AS(io::decode_f16m(bad), Error);
  CHECK_THROWS_AS(io::decode_f16m(std::vector<std::uint8_t>{}), Error);
}

TEST_CASE("mq4 dense round trip") {
  Rng rng(62);
  const QuantizedWeights q = quantize_symmetric(oracles::random_matrix(rng, 128, 128, -1, 1), {4, 64, true});
  for (const PackedQuantMatrix& p : {repack_marlin(q), pack_raw(q)}) {
    const auto bytes = io::encode_mq4(p);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == std::string("MQ4\0", 4));
    const io::Mq4Contents back = io::decode_mq4(bytes);
    REQUIRE(std::holds_alternative<PackedQuantMatrix>(back));
    check_same(std::get<PackedQuantMatrix>(back), p);
  }
}

TEST_CASE("mq4 sparse round trip") {
  Rng rng(63);
  const Sparse24Matrix s = compress_2of4(prune_2of4(oracles::random_matrix(rng, 128, 64, -1, 1)),
                                         {4, 128, true}, {}, 1);
  const io::Mq4Contents back = io::decode_mq4(io::encode_mq4(s));
  REQUIRE(std::holds_alternative<Sparse24Matrix>(back));
  const auto& t = std::get<Sparse24Matrix>(back);
  CHECK(t.N == s.N);
  CHECK(t.K == s.K);
  CHECK(t.selector == 1);
  CHECK(t.values == s.values);
  CHECK(t.meta == s.meta);
  CHECK(t.scales == s.scales);
  CHECK(t.value_order == s.value_order);
  CHECK(t.meta_order == s.meta_order);
  CHECK(decompress(t) == decompress(s));
}

TEST_CASE("mq4 rejects corruption") {
  Rng rng(64);
  const QuantizedWeights q = quantize_symmetric(oracles::random_matrix(rng, 64, 64, -1, 1), {4, 64, true});
  const auto good = io::encode_mq4(repack_marlin(q));
  auto bad = good;
  bad[1] = 'R';
  CHECK_THROWS_WITH_AS(io::decode_mq4(bad), doctest::Contains("magic"), Error);
  bad = good;
  bad.resize(good.size() - 3);
  CHECK_THROWS_WITH_AS(io::decode_mq4(bad), doctest::Contains("truncated"), Error);
  bad = good;
  bad.push_back(1);
  CHECK_THROWS_WITH_AS(io::decode_mq4(bad), doctest::Contains("trailing"), Error);
  bad = good;
  bad[4] = 2;  // version
  CHECK_THROWS_AS(io::decode_mq4(bad), Error);
  bad = good;
  bad[8] = 7;  // layout tag
  CHECK_THROWS_AS(io::decode_mq4(bad), Error);
  // Duplicate a slot in the stored tile order so it is no longer a permutation.
  bad = good;
  const std::size_t order_slots = good.size() - 1 - 2 * 1024;
  bad[order_slots + 2] = bad[order_slots];
  bad[order_slots + 3] = bad[order_slots + 1];
  CHECK_THROWS_AS(io::decode_mq4(bad), Error);
}

TEST_CASE("file helpers") {
  const auto dir = std::filesystem::temp_directory_path() / "marlinlab_test_io";
  std::filesystem::create_directories(dir);
  const DenseMatrix m = DenseMatrix::identity(4);
  io::write_f16m((dir / "m.f16m").string(), m);
  CHECK(io::read_f16m((dir / "m.f16m").string()) == m);
  QuantizedWeights q = quantize_symmetric(DenseMatrix::filled(64, 64, 0.5), {4, kPerColumn, true});
  io::write_mq4((dir / "w.mq4").string(), repack_marlin(q));
  const auto back = io::read_mq4((dir / "w.mq4").string());
  CHECK(std::get<PackedQuantMatrix>(back).words == repack_marlin(q).words);
  CHECK_THROWS_AS(io::read_file((dir / "missing").string()), Error);
  std::filesystem::remove_all(dir);
}
