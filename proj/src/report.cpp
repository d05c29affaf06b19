// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "marlinlab/report.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

namespace marlinlab::report {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

nlohmann::json sm_json(const sim::SmTrace& t) {
  return {{"tiles", t.tiles},
          {"stripes", t.stripes},
          {"a_tile_loads", t.a_tile_loads},
          {"b_words_loaded", t.b_words_loaded},
          {"meta_words_loaded", t.meta_words_loaded},
          {"mma_ops", t.mma_ops},
          {"mac_ops", t.mac_ops},
          {"scale_reloads", t.scale_reloads},
          {"reduction_steps", t.reduction_steps},
          {"output_writes", t.output_writes}};
}

}  // namespace

nlohmann::json plan_report(const StripeAssignment& plan) {
  nlohmann::json sms = nlohmann::json::array();
  int max_load = 0, min_nonzero = std::numeric_limits<int>::max(), idle = 0;
  for (int sm = 0; sm < plan.sms; ++sm) {
    nlohmann::json stripes = nlohmann::json::array();
    for (const Stripe& s : plan.stripes[sm]) {
      stripes.push_back({{"col", s.col},
                         {"row_start", s.row_start},
                         {"len", s.len},
                         {"physical_col", s.physical_col},
                         {"segment", s.segment}});
    }
    const int load = plan.load(sm);
    max_load = std::max(max_load, load);
    if (load > 0) min_nonzero = std::min(min_nonzero, load);
    if (load == 0) ++idle;
    sms.push_back({{"sm", sm}, {"load", load}, {"stripes", std::move(stripes)}});
  }
  const ReductionSchedule sched = reduction_schedule(plan);
  nlohmann::json cols = nlohmann::json::array();
  for (const ColumnReduction& c : sched.columns) cols.push_back({{"col", c.col}, {"order", c.sms}});

  return {{"rows", plan.rows},
          {"cols", plan.cols},
          {"physical_cols", plan.physical_cols},
          {"segments", plan.segments},
          {"sms", plan.sms},
          {"T", plan.T},
          {"per_sm", std::move(sms)},
          {"reduction", {{"steps", sched.steps()}, {"columns", std::move(cols)}}},
          {"balance",
           {{"tiles", plan.tile_count()},
            {"max_load", max_load},
            {"min_nonzero_load", min_nonzero == std::numeric_limits<int>::max() ? 0 : min_nonzero},
            {"idle_sms", idle}}}};
}

nlohmann::json trace_report(const sim::TraceReport& trace) {
  nlohmann::json per_sm = nlohmann::json::array();
  for (const auto& t : trace.per_sm) per_sm.push_back(sm_json(t));
  std::uint32_t lo = std::numeric_limits<std::uint32_t>::max(), hi = 0;
  for (auto c : trace.b_word_loads) {
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  if (trace.b_word_loads.empty()) lo = 0;
  return {{"segments", trace.segments},
          {"per_sm", std::move(per_sm)},
          {"totals", sm_json(trace.totals())},
          {"b_word_loads", {{"words", trace.b_word_loads.size()}, {"min", lo}, {"max", hi}}}};
}

std::string roofline_csv(const perf::GpuSpec& spec, const perf::ProblemShape& base,
                         std::span<const long> batches, int k_sm, int n_sm) {
  std::string out;
  out += "# gpu=" + spec.name + " gmem_bw_gbps=" + fmt("%g", spec.gmem_bw / 1e9) +
         " l2_bw_gbps=" + fmt("%g", spec.l2_bw / 1e9) +
         " fp16_tflops=" + fmt("%g", spec.effective_flops() / 1e12) + "\n";
  out += "# b_opt=" + fmt("%.4f", perf::b_opt(spec, base.weight_bits)) +
         " l2_max_batch=" + std::to_string(perf::l2_max_batch(spec, k_sm, n_sm)) +
         " k_sm=" + std::to_string(k_sm) + " n_sm=" + std::to_string(n_sm) + "\n";
  out += "batch,flops,bytes,ai,t_mem,t_compute,regime,speedup,l2_weight_bound\n";
  for (long m : batches) {
    perf::ProblemShape p = base;
    p.M = double(m);
    const perf::RooflineReport r = perf::roofline(spec, p);
    out += std::to_string(m) + "," + fmt("%.0f", r.flops) + "," + fmt("%.0f", r.bytes) + "," +
           fmt("%.6g", r.arithmetic_intensity) + "," + fmt("%.6e", r.t_mem) + "," +
           fmt("%.6e", r.t_compute) + "," + perf::regime_name(r.regime) + "," +
           fmt("%.4f", r.speedup_vs_fp16) + "," +
           (perf::l2_condition(spec, double(m), k_sm, n_sm) ? "true" : "false") + "\n";
  }
  return out;
}

}  // namespace marlinlab::report
