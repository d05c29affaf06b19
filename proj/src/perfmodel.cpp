// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "marlinlab/perfmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "marlinlab/error.hpp"

namespace marlinlab::perf {

void GpuSpec::validate() const {
  require(sm_count > 0 && gmem_bw > 0 && l2_bw > 0 && fp16_flops > 0,
          "gpu spec: all parameters must be positive");
  require(clock_scale > 0 && clock_scale <= 1, "gpu spec: clock_scale must lie in (0, 1]");
  require(l2_bw > gmem_bw, "gpu spec: L2 bandwidth must exceed global bandwidth");
}

GpuSpec gpu_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("gpu spec: invalid JSON: ") + e.what());
  }
  GpuSpec s;
  try {
    s.name = j.at("name").get<std::string>();
    s.sm_count = j.at("sm_count").get<int>();
    s.gmem_bw = j.at("gmem_bw_gbps").get<double>() * 1e9;
    s.l2_bw = j.at("l2_bw_gbps").get<double>() * 1e9;
    s.fp16_flops = j.at("fp16_tflops").get<double>() * 1e12;
    s.clock_scale = j.value("clock_scale", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("gpu spec: ") + e.what());
  }
  s.validate();
  return s;
}

GpuSpec load_gpu_spec(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "gpu spec: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return gpu_spec_from_json(ss.str());
}

std::string gpu_spec_to_json(const GpuSpec& s) {
  nlohmann::json j{{"name", s.name},
                   {"sm_count", s.sm_count},
                   {"gmem_bw_gbps", s.gmem_bw / 1e9},
                   {"l2_bw_gbps", s.l2_bw / 1e9},
                   {"fp16_tflops", s.fp16_flops / 1e12},
                   {"clock_scale", s.clock_scale}};
  return j.dump(2);
}

void ProblemShape::validate() const {
  require(M > 0 && K > 0 && N > 0, "problem shape: dimensions must be positive");
  require(weight_bits == 4 || weight_bits == 16, "problem shape: weight bits must be 4 or 16");
  require(group_size >= 0, "problem shape: negative group size");
}

double scale_bits(const ProblemShape& p) {
  if (p.weight_bits == 16) return 0.0;
  const double groups = p.group_size == 0 ? 1.0 : std::ceil(p.K / p.group_size);
  return 16.0 * groups * p.N;
}

double bytes_moved(const ProblemShape& p) {
  p.validate();
  const double bits =
      16.0 * p.M * p.K + p.weight_bits * p.K * p.N + 16.0 * p.M * p.N + scale_bits(p);
  return bits / 8.0;
}

const char* regime_name(Regime r) {
  return r == Regime::memory_bound ? "memory-bound" : "compute-bound";
}

namespace {

void fill_times(const GpuSpec& spec, const ProblemShape& p, RooflineReport& r) {
  r.flops = 2.0 * p.M * p.K * p.N;
  r.bytes = bytes_moved(p);
  r.arithmetic_intensity = r.flops / r.bytes;
  r.t_mem = r.bytes / spec.gmem_bw;
  r.t_compute = r.flops / spec.effective_flops();
  r.t_model = std::max(r.t_mem, r.t_compute);
  r.regime = r.t_compute > r.t_mem ? Regime::compute_bound : Regime::memory_bound;
}

}  // namespace

RooflineReport roofline(const GpuSpec& spec, const ProblemShape& p) {
  spec.validate();
  RooflineReport r;
  fill_times(spec, p, r);
  ProblemShape dense = p;
  dense.weight_bits = 16;
  RooflineReport base;
  fill_times(spec, dense, base);
  r.speedup_vs_fp16 = base.t_model / r.t_model;
  return r;
}

double b_opt(const GpuSpec& spec, int weight_bits) {
  spec.validate();
  // 2 M K N / F = b K N / (8 B)  =>  M = (F / B) * (b / 8) / 2
  return spec.flops_per_byte() * (weight_bits / 8.0) / 2.0;
}

bool l2_condition(const GpuSpec& spec, double m, double k_sm, double n_sm) {
  const double l2 = (2.0 * m * k_sm + 0.5 * k_sm * n_sm) / spec.l2_bw;
  const double gl = (0.5 * k_sm * n_sm) / spec.gmem_bw;
  return l2 < gl;
}

long l2_max_batch(const GpuSpec& spec, double k_sm, double n_sm) {
  // 2 M K + K N / 2 < (K N / 2) r with r = B_l2 / B_gl  <=>  M < N (r - 1) / 4
  const double bound = n_sm * (spec.l2_bw / spec.gmem_bw - 1.0) / 4.0;
  long m = static_cast<long>(std::ceil(bound)) - 1;
  if (m < 0) return 0;
  // Guard the strict inequality against rounding at an integral bound.
  while (m > 0 && !l2_condition(spec, double(m), k_sm, n_sm)) --m;
  while (l2_condition(spec, double(m + 1), k_sm, n_sm)) ++m;
  return m;
}

double ideal_speedup(int weight_bits, int group_size) {
  return compression_ratio(weight_bits, group_size, 0.0);
}

double compression_ratio(int weight_bits, int group_size, double extra_bits) {
  require(weight_bits > 0 && weight_bits < 16, "ideal_speedup: weight bits must be below 16");
  const double overhead = group_size == 0 ? 0.0 : 16.0 / group_size;
  return 16.0 / (weight_bits + overhead + extra_bits);
}

double pipeline_utilization(int depth, double t_load_latency, double t_compute_per_iter) {
  require(depth >= 1 && t_load_latency > 0 && t_compute_per_iter > 0,
          "pipeline_utilization: positive arguments required");
  return std::min(1.0, (depth - 1) * t_compute_per_iter / t_load_latency);
}

}  // namespace marlinlab::perf
