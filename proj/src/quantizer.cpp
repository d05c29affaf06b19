// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "marlinlab/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace marlinlab {

void QuantSpec::validate() const {
  require(bits >= 2 && bits <= 8, "quant spec: bits must be in [2, 8]");
  require(group_size == kPerColumn || (group_size > 0 && group_size % 16 == 0),
          "quant spec: group size must be a positive multiple of 16 or per-column");
}

std::size_t QuantSpec::group_rows(std::size_t k) const {
  return group_size == kPerColumn ? k : static_cast<std::size_t>(group_size);
}

std::size_t QuantSpec::group_count(std::size_t k) const {
  const std::size_t g = group_rows(k);
  return g == 0 ? 0 : (k + g - 1) / g;
}

void QuantizedWeights::validate() const {
  spec.validate();
  require(codes.size() == K * N, "quantized weights: code array does not match K x N");
  require(scales.size() == groups() * N, "quantized weights: scale array has wrong length");
  require(spec.symmetric ? zeros.empty() : zeros.size() == scales.size(),
          "quantized weights: zero-point array has wrong length");
  for (auto c : codes) {
    require(c >= spec.code_min() && c <= spec.code_max(), "quantized weights: code out of range");
  }
  for (Fp16Bits s : scales) {
    require(s.is_finite() && !s.is_zero() && (s.bits & 0x8000u) == 0,
            "quantized weights: scales must be finite and positive");
  }
}

GroupQuant quantize_group_minmax(std::span<const double> v, int bits) {
  require(!v.empty(), "quantize_group_minmax: empty vector");
  require(bits >= 1 && bits <= 16, "quantize_group_minmax: unsupported bit width");
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double levels = std::ldexp(1.0, bits) - 1.0;

  GroupQuant out;
  out.zero = *lo;
  out.scale = *hi > *lo ? (*hi - *lo) / levels : 1.0;
  out.codes.reserve(v.size());
  for (double x : v) {
    const double q = round_half_even((x - out.zero) / out.scale);
    out.codes.push_back(static_cast<int>(std::clamp(q, 0.0, levels)));
  }
  return out;
}

namespace {

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

int symmetric_code(double x, double s, int bits) {
  const double lo = -std::ldexp(1.0, bits - 1);
  const double hi = std::ldexp(1.0, bits - 1) - 1.0;
  return static_cast<int>(std::clamp(round_half_even(x / s), lo, hi));
}

// A scale that rounds to zero in binary16 (or an all-zero group) uses 1.
Fp16Bits safe_scale(double s) {
  if (!(s > 0.0)) return kFp16One;
  const Fp16Bits h = fp16_round(s);
  return h.is_zero() ? kFp16One : h;
}

Fp16Bits plain_symmetric_scale(std::span<const double> group, int bits) {
  return safe_scale(max_abs(group) / (std::ldexp(1.0, bits - 1) - 1.0));
}

double symmetric_error(std::span<const double> group, Fp16Bits scale, int bits) {
  const double s = to_double(scale);
  double sum = 0.0;
  for (double x : group) {
    const double r = to_double(fp16_round(symmetric_code(x, s, bits) * s));
    sum += (x - r) * (x - r);
  }
  return std::sqrt(sum);
}

std::vector<double> column_group(const DenseMatrix& w, std::size_t n, std::size_t k0,
                                 std::size_t k1) {
  std::vector<double> g;
  g.reserve(k1 - k0);
  for (std::size_t k = k0; k < k1; ++k) g.push_back(w.value(k, n));
  return g;
}

}  // namespace

std::vector<double> default_clip_grid() {
  std::vector<double> grid;
  for (int i = 10; i <= 20; ++i) grid.push_back(i * 0.05);
  return grid;
}

Fp16Bits search_clip_scale(std::span<const double> group, int bits,
                           std::span<const double> grid) {
  require(!grid.empty(), "search_clip_scale: empty grid");
  for (double c : grid) require(c > 0.0 && c <= 1.0, "search_clip_scale: grid must lie in (0, 1]");
  const double m = max_abs(group);
  if (m == 0.0) return kFp16One;

  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());

  const double divisor = std::ldexp(1.0, bits - 1) - 1.0;
  Fp16Bits best{};
  double best_err = std::numeric_limits<double>::infinity();
  for (double c : sorted) {
    const Fp16Bits s = fp16_round(c * m / divisor);
    if (s.is_zero()) continue;
    const double err = symmetric_error(group, s, bits);
    if (err < best_err) {  // strict: equal error keeps the larger factor
      best_err = err;
      best = s;
    }
  }
  return best_err < std::numeric_limits<double>::infinity() ? best : kFp16One;
}

QuantizedWeights quantize_symmetric(const DenseMatrix& w, const QuantSpec& spec,
                                    std::span<const double> clip_grid) {
  spec.validate();
  require(spec.symmetric, "quantize_symmetric: spec is not symmetric");
  const std::size_t K = w.rows(), N = w.cols();
  const std::size_t g = spec.group_rows(K);
  require(K > 0 && K % g == 0, "quantize_symmetric: K must be divisible by the group size");

  QuantizedWeights q;
  q.K = K;
  q.N = N;
  q.spec = spec;
  q.codes.assign(K * N, 0);
  q.scales.assign(q.groups() * N, kFp16One);

  for (std::size_t gi = 0; gi < q.groups(); ++gi) {
    for (std::size_t n = 0; n < N; ++n) {
      const auto group = column_group(w, n, gi * g, (gi + 1) * g);
      const Fp16Bits s = clip_grid.empty() ? plain_symmetric_scale(group, spec.bits)
                                           : search_clip_scale(group, spec.bits, clip_grid);
      q.scales[gi * N + n] = s;
      const double sd = to_double(s);
      for (std::size_t i = 0; i < g; ++i) {
        q.codes[(gi * g + i) * N + n] =
            static_cast<std::int8_t>(symmetric_code(group[i], sd, spec.bits));
      }
    }
  }
  return q;
}

QuantizedWeights quantize_minmax(const DenseMatrix& w, const QuantSpec& spec) {
  spec.validate();
  require(!spec.symmetric, "quantize_minmax: spec is symmetric");
  const std::size_t K = w.rows(), N = w.cols();
  const std::size_t g = spec.group_rows(K);
  require(K > 0 && K % g == 0, "quantize_minmax: K must be divisible by the group size");

  QuantizedWeights q;
  q.K = K;
  q.N = N;
  q.spec = spec;
  q.codes.assign(K * N, 0);
  q.scales.assign(q.groups() * N, kFp16One);
  q.zeros.assign(q.groups() * N, kFp16Zero);

  const double levels = std::ldexp(1.0, spec.bits) - 1.0;
  for (std::size_t gi = 0; gi < q.groups(); ++gi) {
    for (std::size_t n = 0; n < N; ++n) {
      const auto group = column_group(w, n, gi * g, (gi + 1) * g);
      const auto [lo, hi] = std::minmax_element(group.begin(), group.end());
      const Fp16Bits z = fp16_round(*lo);
      const Fp16Bits s = *hi > *lo ? safe_scale((*hi - *lo) / levels) : kFp16One;
      q.scales[gi * N + n] = s;
      q.zeros[gi * N + n] = z;
      for (std::size_t i = 0; i < g; ++i) {
        const double c = round_half_even((group[i] - to_double(z)) / to_double(s));
        q.codes[(gi * g + i) * N + n] = static_cast<std::int8_t>(std::clamp(c, 0.0, levels));
      }
    }
  }
  return q;
}

DenseMatrix dequantize(const QuantizedWeights& q) {
  q.validate();
  const std::size_t g = q.spec.group_rows(q.K);
  std::vector<Fp16Bits> out(q.K * q.N);
  for (std::size_t k = 0; k < q.K; ++k) {
    for (std::size_t n = 0; n < q.N; ++n) {
      const std::size_t si = (k / g) * q.N + n;
      double v = q.code(k, n) * to_double(q.scales[si]);
      if (!q.spec.symmetric) v += to_double(q.zeros[si]);
      out[k * q.N + n] = fp16_round(v);
    }
  }
  return DenseMatrix(q.K, q.N, std::move(out));
}

double reconstruction_error(std::span<const double> v, std::span<const double> v_hat) {
  require(v.size() == v_hat.size(), "reconstruction_error: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - v_hat[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace marlinlab
