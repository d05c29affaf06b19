// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>

#include <json.hpp>

#include "marlinlab/perfmodel.hpp"
#include "marlinlab/scheduler.hpp"
#include "marlinlab/simgemm.hpp"

namespace marlinlab::report {

/// Stripe lists per SM, per-column commit order and load-balance statistics.
nlohmann::json plan_report(const StripeAssignment& plan);

/// Per-SM counters, their totals and a summary of the per-word B loads.
nlohmann::json trace_report(const sim::TraceReport& trace);

/// Roofline sweep as CSV. Two leading '#' lines carry the spec, b_opt and the
/// largest batch for which the L2 condition holds; the columns are
/// batch,flops,bytes,ai,t_mem,t_compute,regime,speedup,l2_weight_bound.
std::string roofline_csv(const perf::GpuSpec& spec, const perf::ProblemShape& base,
                         std::span<const long> batches, int k_sm, int n_sm);

}  // namespace marlinlab::report
