// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "marlinlab/layout.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "marlinlab/error.hpp"

namespace marlinlab::layout {

VectorCoord swizzle(int i, int j) {
  require(i >= 0 && i < kSwizzleSpan && j >= 0 && j < kSwizzleSpan,
          "swizzle: coordinates must lie in [0, 8)");
  return {i, i ^ j};
}

VectorCoord swizzle_any(int row, int col) {
  require(row >= 0 && col >= 0, "swizzle: negative coordinate");
  return {row, (col & ~(kSwizzleSpan - 1)) | ((col & (kSwizzleSpan - 1)) ^ (row % kSwizzleSpan))};
}

std::uint32_t vector_offset(VectorCoord c, int row_vectors) {
  return static_cast<std::uint32_t>((c.row * row_vectors + c.col) * kVectorBytes);
}

std::array<VectorCoord, 4> ldmatrix_quads(int i, int j) {
  require(i >= 0 && i < kSwizzleSpan && j >= 0 && j + 1 < kSwizzleSpan,
          "ldmatrix_quads: anchor out of range");
  const VectorCoord a = swizzle(i, j);
  const VectorCoord b = swizzle(i, j + 1);
  return {a, VectorCoord{i + 8, a.col}, b, VectorCoord{i + 8, b.col}};
}

int simulate_banks(const AccessPattern& pattern) {
  // phase -> bank -> distinct word addresses
  std::map<int, std::map<int, std::set<std::uint32_t>>> phases;
  for (const Access& a : pattern) {
    require(a.lane >= 0 && a.lane < 32, "simulate_banks: lane out of range");
    require(a.width == kVectorBytes, "simulate_banks: only 16-byte accesses are modeled");
    require(a.byte_address % kVectorBytes == 0, "simulate_banks: misaligned address");
    auto& banks = phases[a.lane / BankModel::lanes_per_phase];
    for (int w = 0; w < a.width / BankModel::bank_width; ++w) {
      const std::uint32_t word = a.byte_address / BankModel::bank_width + w;
      banks[static_cast<int>(word % BankModel::banks)].insert(word);
    }
  }
  int conflicts = 0;
  for (const auto& [phase, banks] : phases) {
    for (const auto& [bank, words] : banks) conflicts += static_cast<int>(words.size()) - 1;
  }
  return conflicts;
}

AccessPattern ldmatrix_pattern(int j, bool swizzled, int row_vectors) {
  require(row_vectors % kSwizzleSpan == 0, "ldmatrix_pattern: rows must be whole 128-byte segments");
  AccessPattern p;
  for (int i = 0; i < 8; ++i) {
    const std::array<VectorCoord, 4> quad =
        swizzled ? ldmatrix_quads(i, j)
                 : std::array<VectorCoord, 4>{VectorCoord{i, j}, VectorCoord{i + 8, j},
                                              VectorCoord{i, j + 1}, VectorCoord{i + 8, j + 1}};
    for (int q = 0; q < 4; ++q) p.push_back({8 * q + i, vector_offset(quad[q], row_vectors)});
  }
  return p;
}

bool contiguous_write_check(std::span<const VectorCoord> written, int row_vectors) {
  if (written.empty()) return true;
  std::vector<std::uint32_t> offsets;
  offsets.reserve(written.size());
  for (VectorCoord c : written) offsets.push_back(vector_offset(swizzle_any(c.row, c.col), row_vectors));
  std::sort(offsets.begin(), offsets.end());
  if (std::adjacent_find(offsets.begin(), offsets.end()) != offsets.end()) return false;
  return offsets.back() - offsets.front() == (offsets.size() - 1) * kVectorBytes;
}

bool contiguous_write_check(std::span<const int> rows, int row_vectors) {
  std::vector<VectorCoord> written;
  for (int r : rows) {
    for (int c = 0; c < row_vectors; ++c) written.push_back({r, c});
  }
  return contiguous_write_check(written, row_vectors);
}

}  // namespace marlinlab::layout
