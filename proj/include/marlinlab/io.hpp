// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "marlinlab/codec.hpp"
#include "marlinlab/numerics.hpp"
#include "marlinlab/sparse24.hpp"

namespace marlinlab::io {

// All integers are little-endian.
//
// .f16m   "F16M" | u32 version = 1 | u32 rows | u32 cols | u16 values[rows*cols]
//
// .mq4    "MQ4\0" | u32 version = 1 | u8 layout | u8 bits = 4 | u16 reserved = 0
//         | u32 K | u32 N | u32 group_size (0 = per-column)
//         | u32 word_count | u32 words[] | u32 scale_count | u16 scales[]
//         | order block (tile order of the words)
//         | u8 sparse flag
//         [ | u8 selector | u32 meta_count | u32 meta[] | order block (metadata) ]
//
// order block: u32 byte length L (0 when absent), then u16 tile_rows,
//              u16 tile_cols, u16 slots[tile_rows * tile_cols].

std::vector<std::uint8_t> encode_f16m(const DenseMatrix& m);
DenseMatrix decode_f16m(std::span<const std::uint8_t> bytes);

using Mq4Contents = std::variant<PackedQuantMatrix, Sparse24Matrix>;

std::vector<std::uint8_t> encode_mq4(const PackedQuantMatrix& p);
std::vector<std::uint8_t> encode_mq4(const Sparse24Matrix& s);
/// Validates the decoded structure; throws Error on any malformed input.
Mq4Contents decode_mq4(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

DenseMatrix read_f16m(const std::string& path);
void write_f16m(const std::string& path, const DenseMatrix& m);
Mq4Contents read_mq4(const std::string& path);
void write_mq4(const std::string& path, const Mq4Contents& contents);

}  // namespace marlinlab::io
