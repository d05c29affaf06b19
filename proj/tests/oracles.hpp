// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

// Independent brute-force reference implementations used by the tests. None
// of these call into the code under test beyond plain data accessors.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "marlinlab/numerics.hpp"
#include "marlinlab/rng.hpp"

namespace oracles {

/// Exact value of a binary16 pattern, decoded field by field.
inline double half_value(std::uint16_t bits) {
  const int sign = bits >> 15, exp = (bits >> 10) & 0x1F, man = bits & 0x3FF;
  const double mag = exp == 0 ? std::ldexp(man, -24) : std::ldexp(1024 + man, exp - 25);
  return sign ? -mag : mag;
}

/// Nearest finite binary16 by exhaustive search over all 63488 finite
/// patterns, ties to the even pattern. Returns -1 when x lies beyond the
/// overflow threshold (65520 in magnitude).
inline long nearest_half(double x) {
  if (std::fabs(x) >= 65520.0) return -1;
  long best = -1;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::uint32_t b = 0; b < 0x10000; ++b) {
    if (((b >> 10) & 0x1F) == 0x1F) continue;
    const double v = half_value(static_cast<std::uint16_t>(b));
    if ((v == 0) && (std::signbit(v) != std::signbit(x))) continue;
    if (v != 0 && (v < 0) != (x < 0)) continue;
    const double err = std::fabs(v - x);
    if (err < best_err || (err == best_err && (b & 1) == 0)) {
      best = b;
      best_err = err;
    }
  }
  return best;
}

/// Removed energy minimizing 2-of-4 keep mask, ties to the lexicographically
/// smallest pair of indices.
inline std::array<int, 2> best_keep_pair(const std::array<double, 4>& v) {
  double best = std::numeric_limits<double>::infinity();
  std::array<int, 2> keep{};
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      double removed = 0;
      for (int i = 0; i < 4; ++i) removed += (i == a || i == b) ? 0 : v[i] * v[i];
      if (removed < best) {
        best = removed;
        keep = {a, b};
      }
    }
  }
  return keep;
}

/// Column-major tile owner by direct enumeration: tile t -> SM t / T.
inline std::vector<int> tile_owners(int rows, int cols, int sms) {
  const long tiles = long(rows) * cols;
  const long T = (tiles + sms - 1) / sms;
  std::vector<int> owner(tiles);
  for (long t = 0; t < tiles; ++t) owner[t] = static_cast<int>(t / T);
  return owner;  // index: col * rows + row
}

inline marlinlab::DenseMatrix random_matrix(marlinlab::Rng& rng, std::size_t rows, std::size_t cols,
                                            double lo, double hi) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return marlinlab::DenseMatrix::from_values(rows, cols, v);
}

inline marlinlab::DenseMatrix random_int_matrix(marlinlab::Rng& rng, std::size_t rows,
                                                std::size_t cols, int lo, int hi) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = double(rng.range(lo, hi));
  return marlinlab::DenseMatrix::from_values(rows, cols, v);
}

/// Plain triple loop: float accumulation of exact products in ascending k.
inline std::vector<float> matmul_float(const marlinlab::DenseMatrix& a,
                                       const marlinlab::DenseMatrix& b) {
  std::vector<float> c(a.rows() * b.cols(), 0.0f);
  for (std::size_t m = 0; m < a.rows(); ++m) {
    for (std::size_t n = 0; n < b.cols(); ++n) {
      float acc = 0.0f;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a.value(m, k) * b.value(k, n);
      c[m * b.cols() + n] = acc;
    }
  }
  return c;
}

}  // namespace oracles
