// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "marlinlab/numerics.hpp"

namespace marlinlab {

inline constexpr int kPerColumn = 0;

struct QuantSpec {
  int bits = 4;
  int group_size = 128;  // kPerColumn: one group spanning all of K
  bool symmetric = true;

  void validate() const;
  /// Rows per group for a matrix with k rows.
  std::size_t group_rows(std::size_t k) const;
  std::size_t group_count(std::size_t k) const;
  int code_min() const { return symmetric ? -(1 << (bits - 1)) : 0; }
  int code_max() const { return symmetric ? (1 << (bits - 1)) - 1 : (1 << bits) - 1; }
};

/// Logical K x N integer codes with one scale (and zero point, if asymmetric)
/// per group of consecutive rows within a column.
struct QuantizedWeights {
  std::size_t K = 0;
  std::size_t N = 0;
  QuantSpec spec;
  std::vector<std::int8_t> codes;  // K x N row-major
  std::vector<Fp16Bits> scales;    // groups x N row-major
  std::vector<Fp16Bits> zeros;     // groups x N, empty when symmetric

  std::size_t groups() const { return spec.group_count(K); }
  int code(std::size_t k, std::size_t n) const { return codes[k * N + n]; }
  Fp16Bits scale(std::size_t k, std::size_t n) const {
    return scales[(k / spec.group_rows(K)) * N + n];
  }

  /// Checks shapes, code ranges and scale positivity.
  void validate() const;
};

struct GroupQuant {
  std::vector<int> codes;
  double scale = 1.0;
  double zero = 0.0;
};

/// Min-max asymmetric quantization of one vector. A constant vector falls
/// back to scale 1 with zero point min(v).
GroupQuant quantize_group_minmax(std::span<const double> v, int bits);

/// Symmetric grouped quantization; s = max|v| / (2^(b-1) - 1) rounded to
/// binary16. When clip_grid is non-empty every group scale is chosen by
/// search_clip_scale instead.
QuantizedWeights quantize_symmetric(const DenseMatrix& w, const QuantSpec& spec,
                                    std::span<const double> clip_grid = {});

/// Asymmetric grouped min-max quantization with binary16 scales and zeros.
QuantizedWeights quantize_minmax(const DenseMatrix& w, const QuantSpec& spec);

/// {0.50, 0.55, ..., 1.00}
std::vector<double> default_clip_grid();

/// Symmetric scale minimizing the group's reconstruction error over the
/// shrink factors in grid. Ties keep the larger factor.
Fp16Bits search_clip_scale(std::span<const double> group, int bits,
                           std::span<const double> grid);

DenseMatrix dequantize(const QuantizedWeights& q);

/// L2 norm of v - v_hat.
double reconstruction_error(std::span<const double> v, std::span<const double> v_hat);

}  // namespace marlinlab
