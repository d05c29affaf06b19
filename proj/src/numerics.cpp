// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "marlinlab/numerics.hpp"

#include <bit>
#include <cmath>
#include <string>

namespace marlinlab {

float to_float(Fp16Bits h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h.bits & 0x8000u) << 16;
  const std::uint32_t exp = (h.bits >> 10) & 0x1Fu;
  std::uint32_t mant = h.bits & 0x3FFu;

  std::uint32_t out;
  if (exp == 0x1F) {
    out = sign | 0x7F800000u | (mant << 13);
  } else if (exp != 0) {
    out = sign | ((exp + 112u) << 23) | (mant << 13);
  } else if (mant == 0) {
    out = sign;
  } else {
    // Subnormal: renormalize into a float normal.
    int e = -1;
    do {
      mant <<= 1;
      ++e;
    } while ((mant & 0x400u) == 0);
    out = sign | ((112u - static_cast<std::uint32_t>(e)) << 23) | ((mant & 0x3FFu) << 13);
  }
  return std::bit_cast<float>(out);
}

double round_half_even(double x) {
  const double fl = std::floor(x);
  const double frac = x - fl;
  if (frac > 0.5) return fl + 1.0;
  if (frac < 0.5) return fl;
  return std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
}

Fp16Bits fp16_round(double x) {
  if (!std::isfinite(x)) throw Error("not representable: non-finite value");
  const std::uint16_t sign = std::signbit(x) ? 0x8000u : 0u;
  const double ax = std::fabs(x);
  if (ax == 0.0) return Fp16Bits{sign};

  int e = 0;
  std::frexp(ax, &e);
  // ax in [2^(e-1), 2^e); binary16 carries 11 significant bits down to 2^-14,
  // below which the quantum is fixed at 2^-24.
  int exponent = e - 1;
  if (exponent < -14) exponent = -14;
  const double quantum = std::ldexp(1.0, exponent - 10);
  const double q = round_half_even(ax / quantum);
  const double r = q * quantum;
  if (r > kFp16Max) {
    throw Error("not representable: " + std::to_string(x) + " overflows binary16");
  }

  if (r < std::ldexp(1.0, -14)) {
    return Fp16Bits{static_cast<std::uint16_t>(sign | static_cast<std::uint16_t>(q))};
  }
  std::frexp(r, &e);
  const int biased = e - 1 + 15;
  const auto mant = static_cast<std::uint32_t>(std::ldexp(r, 10 - (e - 1))) - 1024u;
  return Fp16Bits{static_cast<std::uint16_t>(sign | (biased << 10) | mant)};
}

Fp16Bits fp16_add(Fp16Bits a, Fp16Bits b) { return fp16_round(to_double(a) + to_double(b)); }
Fp16Bits fp16_sub(Fp16Bits a, Fp16Bits b) { return fp16_round(to_double(a) - to_double(b)); }
Fp16Bits fp16_mul(Fp16Bits a, Fp16Bits b) { return fp16_round(to_double(a) * to_double(b)); }

Fp16Bits fp16_fma(Fp16Bits a, Fp16Bits b, Fp16Bits c) {
  // Single rounding only when a*b + c is exact in double (true for the codec's
  // operands); far-apart magnitudes can round twice.
  return fp16_round(to_double(a) * to_double(b) + to_double(c));
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, kFp16Zero) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<Fp16Bits> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows * cols, "matrix data length does not match shape");
  for (Fp16Bits v : data_) {
    require(v.is_finite(), "matrix element is NaN or infinity");
  }
}

DenseMatrix DenseMatrix::from_values(std::size_t rows, std::size_t cols,
                                     std::span<const double> values) {
  require(values.size() == rows * cols, "matrix data length does not match shape");
  std::vector<Fp16Bits> data;
  data.reserve(values.size());
  for (double v : values) data.push_back(fp16_round(v));
  return DenseMatrix(rows, cols, std::move(data));
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.data_[i * n + i] = kFp16One;
  return m;
}

DenseMatrix DenseMatrix::filled(std::size_t rows, std::size_t cols, double value) {
  DenseMatrix m(rows, cols);
  const Fp16Bits v = fp16_round(value);
  for (auto& x : m.data_) x = v;
  return m;
}

void DenseMatrix::set(std::size_t r, std::size_t c, Fp16Bits v) {
  require(r < rows_ && c < cols_, "matrix index out of range");
  require(v.is_finite(), "matrix element is NaN or infinity");
  data_[r * cols_ + c] = v;
}

std::vector<double> DenseMatrix::to_values() const {
  std::vector<double> out;
  out.reserve(data_.size());
  for (Fp16Bits v : data_) out.push_back(to_double(v));
  return out;
}

DenseMatrix AccMatrix::to_fp16() const {
  std::vector<Fp16Bits> out;
  out.reserve(data_.size());
  for (float v : data_) out.push_back(fp16_round(v));
  return DenseMatrix(rows_, cols_, std::move(out));
}

AccMatrix gemm_reference(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.cols() == b.rows(), "gemm_reference: inner dimensions do not match");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<float> bf(k * n);
  for (std::size_t i = 0; i < k * n; ++i) bf[i] = to_float(b.data()[i]);

  AccMatrix c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (std::size_t kk = 0; kk < k; ++kk) {
        // Product of two binary16 values has <= 22 significant bits: exact in float.
        acc += a.value(i, kk) * bf[kk * n + j];
      }
      c.at(i, j) = acc;
    }
  }
  return c;
}

}  // namespace marlinlab
