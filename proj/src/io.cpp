// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "marlinlab/io.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "marlinlab/error.hpp"

namespace marlinlab::io {

namespace {

constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(const char* s, std::size_t n) { out_.insert(out_.end(), s, s + n); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void order(const TileOrder& o) {
    if (o.empty()) {
      u32(0);
      return;
    }
    u32(static_cast<std::uint32_t>(4 + 2 * o.slots.size()));
    u16(o.tile_rows);
    u16(o.tile_cols);
    for (auto s : o.slots) u16(s);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> in, const char* what) : in_(in), what_(what) {}

  void need(std::size_t n) {
    require(in_.size() - pos_ >= n, std::string(what_) + ": truncated file");
  }
  void magic(const char* m, std::size_t n) {
    need(n);
    require(std::memcmp(in_.data() + pos_, m, n) == 0, std::string(what_) + ": bad magic");
    pos_ += n;
  }
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{in_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  /// Reads a u32 element count and checks that count * width bytes remain.
  std::uint32_t count(std::size_t width) {
    const std::uint32_t n = u32();
    need(std::size_t{n} * width);
    return n;
  }
  TileOrder order() {
    const std::uint32_t len = u32();
    TileOrder o;
    if (len == 0) return o;
    need(len);
    require(len >= 4 && len % 2 == 0, std::string(what_) + ": malformed tile order");
    o.tile_rows = u16();
    o.tile_cols = u16();
    require(len == 4 + 2 * o.tile_size() && o.tile_size() > 0,
            std::string(what_) + ": tile order length mismatch");
    o.slots.resize(o.tile_size());
    for (auto& s : o.slots) s = u16();
    return o;
  }
  void finish() { require(pos_ == in_.size(), std::string(what_) + ": trailing bytes"); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  const char* what_;
};

void write_header(Writer& w, std::uint8_t layout, std::size_t k, std::size_t n, int group_size) {
  w.bytes("MQ4\0", 4);
  w.u32(kVersion);
  w.u8(layout);
  w.u8(4);
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(k));
  w.u32(static_cast<std::uint32_t>(n));
  w.u32(static_cast<std::uint32_t>(group_size));
}

void write_payload(Writer& w, std::span<const Word32> words, std::span<const Fp16Bits> scales,
                   const TileOrder& order) {
  w.u32(static_cast<std::uint32_t>(words.size()));
  for (Word32 x : words) w.u32(x);
  w.u32(static_cast<std::uint32_t>(scales.size()));
  for (Fp16Bits s : scales) w.u16(s.bits);
  w.order(order);
}

}  // namespace

std::vector<std::uint8_t> encode_f16m(const DenseMatrix& m) {
  Writer w;
  w.bytes("F16M", 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (Fp16Bits v : m.data()) w.u16(v.bits);
  return w.take();
}

DenseMatrix decode_f16m(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "f16m");
  r.magic("F16M", 4);
  require(r.u32() == kVersion, "f16m: unsupported version");
  const std::size_t rows = r.u32(), cols = r.u32();
  require(rows > 0 && cols > 0, "f16m: empty matrix");
  r.need(rows * cols * 2);
  std::vector<Fp16Bits> data(rows * cols);
  for (auto& v : data) {
    v.bits = r.u16();
    require(v.is_finite(), "f16m: non-finite value");
  }
  r.finish();
  return DenseMatrix(rows, cols, std::move(data));
}

std::vector<std::uint8_t> encode_mq4(const PackedQuantMatrix& p) {
  p.validate();
  Writer w;
  write_header(w, static_cast<std::uint8_t>(p.layout), p.K, p.N, p.group_size);
  write_payload(w, p.words, p.packed_scales, p.tile_order);
  w.u8(0);
  return w.take();
}

std::vector<std::uint8_t> encode_mq4(const Sparse24Matrix& s) {
  s.validate();
  Writer w;
  write_header(w, static_cast<std::uint8_t>(PackLayout::marlin), s.K, s.N, s.group_size);
  write_payload(w, s.values, s.scales, s.value_order);
  w.u8(1);
  w.u8(static_cast<std::uint8_t>(s.selector));
  w.u32(static_cast<std::uint32_t>(s.meta.size()));
  for (auto m : s.meta) w.u32(m);
  w.order(s.meta_order);
  return w.take();
}

Mq4Contents decode_mq4(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "mq4");
  r.magic("MQ4\0", 4);
  require(r.u32() == kVersion, "mq4: unsupported version");
  const std::uint8_t layout = r.u8();
  require(layout <= 1, "mq4: unknown layout tag");
  require(r.u8() == 4, "mq4: only 4-bit weights are supported");
  require(r.u16() == 0, "mq4: reserved field must be zero");
  const std::size_t K = r.u32(), N = r.u32();
  const std::uint32_t g = r.u32();
  require(g <= K, "mq4: group size exceeds K");
  const int group_size = static_cast<int>(g);

  std::vector<Word32> words(r.count(4));
  for (auto& x : words) x = r.u32();
  std::vector<Fp16Bits> scales(r.count(2));
  for (auto& s : scales) {
    s.bits = r.u16();
    require(s.is_finite(), "mq4: non-finite scale");
  }
  TileOrder order = r.order();
  const std::uint8_t sparse = r.u8();
  require(sparse <= 1, "mq4: bad sparse flag");

  if (sparse == 0) {
    PackedQuantMatrix p;
    p.K = K;
    p.N = N;
    p.group_size = group_size;
    p.layout = static_cast<PackLayout>(layout);
    p.words = std::move(words);
    p.packed_scales = std::move(scales);
    p.tile_order = std::move(order);
    r.finish();
    p.validate();
    return p;
  }
  require(layout == static_cast<std::uint8_t>(PackLayout::marlin),
          "mq4: sparse payload requires the marlin layout tag");
  Sparse24Matrix s;
  s.K = K;
  s.N = N;
  s.group_size = group_size;
  s.selector = r.u8();
  s.meta.resize(r.count(4));
  for (auto& m : s.meta) m = r.u32();
  s.meta_order = r.order();
  s.values = std::move(words);
  s.scales = std::move(scales);
  s.value_order = std::move(order);
  r.finish();
  s.validate();
  return s;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), "write failed: " + path);
}

DenseMatrix read_f16m(const std::string& path) { return decode_f16m(read_file(path)); }

void write_f16m(const std::string& path, const DenseMatrix& m) {
  write_file(path, encode_f16m(m));
}

Mq4Contents read_mq4(const std::string& path) { return decode_mq4(read_file(path)); }

void write_mq4(const std::string& path, const Mq4Contents& contents) {
  std::visit([&](const auto& x) { write_file(path, encode_mq4(x)); }, contents);
}

}  // namespace marlinlab::io
