// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "marlinlab/numerics.hpp"
#include "marlinlab/quantizer.hpp"
#include "marlinlab/scheduler.hpp"

namespace marlinlab::oracle {

/// Element-by-element reference for the simulated kernel. Works from logical
/// (unpacked) weights and recomputes every output through the same summation
/// structure: per-warp float partials in ascending k, the pairwise warp tree,
/// and the bottom-up binary16 chain across stripes. Grouped weights enter as
/// binary16 code * scale; per-column weights enter as raw codes and the scale
/// is applied once to the final binary16 sum.
DenseMatrix reference_marlin_gemm(const DenseMatrix& a, const QuantizedWeights& q,
                                  const TilingConfig& cfg, const StripeAssignment& plan);

/// binary16(sum over ascending k in float of A * dequant(B)).
DenseMatrix naive_gemm(const DenseMatrix& a, const QuantizedWeights& q);

/// max |got - want| / max |want| (0 when both are zero).
double normwise_relative_error(const DenseMatrix& got, const DenseMatrix& want);

}  // namespace marlinlab::oracle
