// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "marlinlab/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "marlinlab/error.hpp"

namespace marlinlab::oracle {

DenseMatrix reference_marlin_gemm(const DenseMatrix& a, const QuantizedWeights& q,
                                  const TilingConfig& cfg, const StripeAssignment& plan) {
  cfg.validate();
  plan.validate();
  q.validate();
  require(q.spec.symmetric, "reference: only symmetric weights are supported");
  const std::size_t M = a.rows(), K = q.K, N = q.N;
  require(a.cols() == K, "reference: A must be M x K");

  const bool per_column = q.spec.group_size == kPerColumn;
  std::vector<float> b(K * N);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t n = 0; n < N; ++n) {
      const Fp16Bits code = fp16_round(q.code(k, n));
      b[k * N + n] = per_column ? to_float(code) : to_float(fp16_mul(code, q.scale(k, n)));
    }
  }

  const int R = cfg.warps_per_block();
  const auto order = column_contributions(plan);
  DenseMatrix c(M, N);
  std::vector<float> warp(R);
  for (int vc = 0; vc < plan.cols; ++vc) {
    const auto& list = order[vc];
    const Stripe& head = plan.stripes[list.front().sm][list.front().stripe];
    const std::size_t row0 = std::size_t(head.segment) * cfg.m_segment;
    const std::size_t rows = std::min<std::size_t>(cfg.m_segment, M - row0);
    const std::size_t col0 = std::size_t(head.physical_col) * cfg.n_sm;
    for (std::size_t m = row0; m < row0 + rows; ++m) {
      for (std::size_t n = col0; n < col0 + std::size_t(cfg.n_sm); ++n) {
        Fp16Bits h = kFp16Zero;
        for (std::size_t pos = 0; pos < list.size(); ++pos) {
          const Stripe& st = plan.stripes[list[pos].sm][list[pos].stripe];
          std::fill(warp.begin(), warp.end(), 0.0f);
          for (int r = 0; r < R; ++r) {
            for (int t = st.row_start; t < st.row_start + st.len; ++t) {
              for (int i = r; i < cfg.k_blocks(); i += R) {
                const std::size_t k0 = std::size_t(t) * cfg.k_sm + std::size_t(i) * cfg.k_wa;
                for (std::size_t k = k0; k < k0 + std::size_t(cfg.k_wa); ++k) {
                  warp[r] += a.value(m, k) * b[k * N + n];
                }
              }
            }
          }
          for (int stride = R / 2; stride >= 1; stride /= 2) {
            for (int r = 0; r < stride; ++r) warp[r] = warp[r] + warp[r + stride];
          }
          float v = warp[0];
          if (pos > 0) v = v + to_float(h);
          h = fp16_round(v);
          if (pos + 1 == list.size() && per_column) h = fp16_mul(h, q.scales[n]);
        }
        c.set(m, n, h);
      }
    }
  }
  return c;
}

DenseMatrix naive_gemm(const DenseMatrix& a, const QuantizedWeights& q) {
  return gemm_reference(a, dequantize(q)).to_fp16();
}

double normwise_relative_error(const DenseMatrix& got, const DenseMatrix& want) {
  require(got.rows() == want.rows() && got.cols() == want.cols(),
          "relative error: shape mismatch");
  double diff = 0, ref = 0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    diff = std::max(diff, std::fabs(to_double(got.data()[i]) - to_double(want.data()[i])));
    ref = std::max(ref, std::fabs(to_double(want.data()[i])));
  }
  if (ref == 0) return diff == 0 ? 0.0 : INFINITY;
  return diff / ref;
}

}  // namespace marlinlab::oracle
