// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace marlinlab::layout {

/// Position of a 16-byte vector in a tile: row, and column in units of 16 bytes.
struct VectorCoord {
  int row;
  int col;
  friend bool operator==(VectorCoord, VectorCoord) = default;
};

inline constexpr int kVectorBytes = 16;
inline constexpr int kSwizzleSpan = 8;  // vectors per 128-byte row segment

/// Vector (i, j) is stored at (i, i xor j). Both indices in [0, 8).
VectorCoord swizzle(int i, int j);

/// Swizzled location of vector (row, col) for any row and column: the xor uses
/// row % 8 and acts inside each 8-vector segment of the row.
VectorCoord swizzle_any(int row, int col);

/// Byte offset of vector (row, col) in a tile whose rows are row_vectors wide.
std::uint32_t vector_offset(VectorCoord c, int row_vectors);

/// The four vectors ij, (i+8)j, i(j+1), (i+8)(j+1) one ldmatrix.x4 lane pair
/// group addresses, mapped through the swizzle. i in [0, 8), j in [0, 7).
std::array<VectorCoord, 4> ldmatrix_quads(int i, int j);

struct Access {
  int lane;
  std::uint32_t byte_address;
  int width = kVectorBytes;
};
using AccessPattern = std::vector<Access>;

/// Shared memory geometry of the simulated device.
struct BankModel {
  static constexpr int banks = 32;
  static constexpr int bank_width = 4;
  static constexpr int lanes_per_phase = 8;  // 16-byte accesses issue per quarter warp
};

/// Bank conflicts of one warp-wide access. Accesses are grouped into phases of
/// 8 lanes; within a phase each bank costs (distinct words it serves - 1).
/// Identical word addresses broadcast for free.
int simulate_banks(const AccessPattern& pattern);

/// Addresses of one ldmatrix.x4 over the 16 x 16 FP16 block whose first
/// vector column is j, in a tile with rows of row_vectors vectors. Lane
/// 8 * q + i supplies quad entry q of anchor row i.
AccessPattern ldmatrix_pattern(int j, bool swizzled, int row_vectors = kSwizzleSpan);

/// True when a warp writing every vector of the given global rows lands on one
/// contiguous byte range of the swizzled shared tile.
bool contiguous_write_check(std::span<const int> rows, int row_vectors = kSwizzleSpan);

/// Same check for an explicit list of written vectors.
bool contiguous_write_check(std::span<const VectorCoord> written, int row_vectors);

}  // namespace marlinlab::layout
