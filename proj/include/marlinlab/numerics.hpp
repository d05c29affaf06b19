// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "marlinlab/error.hpp"

namespace marlinlab {

/// Raw IEEE binary16 pattern: 1 sign bit, 5 exponent bits, 10 mantissa bits.
struct Fp16Bits {
  std::uint16_t bits = 0;

  constexpr bool is_finite() const { return (bits & 0x7C00u) != 0x7C00u; }
  constexpr bool is_zero() const { return (bits & 0x7FFFu) == 0; }
  friend constexpr bool operator==(Fp16Bits, Fp16Bits) = default;
};

inline constexpr Fp16Bits kFp16Zero{0x0000};
inline constexpr Fp16Bits kFp16One{0x3C00};
inline constexpr double kFp16Max = 65504.0;

/// Exact widening conversion. Infinity and NaN patterns widen to the float
/// equivalents; callers that build matrices reject those first.
float to_float(Fp16Bits h);
inline double to_double(Fp16Bits h) { return static_cast<double>(to_float(h)); }

/// Rounds to the nearest binary16 value, ties to even. Throws Error("not
/// representable") for NaN, infinities and magnitudes that overflow.
Fp16Bits fp16_round(double x);

/// Round-half-even to an integer, independent of the FPU rounding mode.
double round_half_even(double x);

// Binary16 arithmetic: operands are widened to double, where sums, products
// and fused multiply-adds of binary16 values are exact, then rounded once.
Fp16Bits fp16_add(Fp16Bits a, Fp16Bits b);
Fp16Bits fp16_sub(Fp16Bits a, Fp16Bits b);
Fp16Bits fp16_mul(Fp16Bits a, Fp16Bits b);
Fp16Bits fp16_fma(Fp16Bits a, Fp16Bits b, Fp16Bits c);

/// Row-major matrix of finite binary16 values.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<Fp16Bits> data);

  /// Rounds every value with fp16_round.
  static DenseMatrix from_values(std::size_t rows, std::size_t cols,
                                 std::span<const double> values);
  static DenseMatrix identity(std::size_t n);
  static DenseMatrix filled(std::size_t rows, std::size_t cols, double value);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  Fp16Bits at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  float value(std::size_t r, std::size_t c) const { return to_float(at(r, c)); }
  void set(std::size_t r, std::size_t c, Fp16Bits v);

  std::span<const Fp16Bits> data() const { return data_; }
  std::vector<double> to_values() const;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Fp16Bits> data_;
};

/// Row-major 32-bit accumulators.
class AccMatrix {
 public:
  AccMatrix() = default;
  AccMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  float& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const float> data() const { return data_; }

  /// Rounds every accumulator to binary16; throws if any overflows.
  DenseMatrix to_fp16() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

/// C = A * B with exact binary16 products accumulated in float, ascending k.
AccMatrix gemm_reference(const DenseMatrix& a, const DenseMatrix& b);

}  // namespace marlinlab
