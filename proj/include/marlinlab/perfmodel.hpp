// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

namespace marlinlab::perf {

/// Device parameters. Bandwidths in bytes/s, throughput in FLOP/s.
struct GpuSpec {
  std::string name = "A10";
  int sm_count = 72;
  double gmem_bw = 600e9;
  double l2_bw = 2.5e12;  // estimate; not published by the vendor
  double fp16_flops = 125e12;
  double clock_scale = 1.0;  // sustained / boost clock

  void validate() const;
  double effective_flops() const { return fp16_flops * clock_scale; }
  /// Machine balance in FLOP per byte.
  double flops_per_byte() const { return effective_flops() / gmem_bw; }

  static GpuSpec a10() { return GpuSpec{}; }
};

/// Parses {name, sm_count, gmem_bw_gbps, l2_bw_gbps, fp16_tflops, clock_scale}.
GpuSpec gpu_spec_from_json(const std::string& text);
GpuSpec load_gpu_spec(const std::string& path);
std::string gpu_spec_to_json(const GpuSpec& spec);

struct ProblemShape {
  double M = 1, K = 4096, N = 4096;
  int weight_bits = 4;  // 4 or 16
  int group_size = 128; // 0 = per-column

  void validate() const;
};

/// Scale bits per weight row group (zero for 16-bit weights).
double scale_bits(const ProblemShape& p);

/// (16MK + b*K*N + 16MN + 16 * ceil(K/G) * N) / 8.
double bytes_moved(const ProblemShape& p);

enum class Regime { memory_bound, compute_bound };
const char* regime_name(Regime r);

struct RooflineReport {
  double flops = 0;
  double bytes = 0;
  double arithmetic_intensity = 0;
  double t_mem = 0;
  double t_compute = 0;
  double t_model = 0;
  Regime regime = Regime::memory_bound;
  double speedup_vs_fp16 = 1;
};

RooflineReport roofline(const GpuSpec& spec, const ProblemShape& p);

/// Batch size where compute time meets weight-load time as K, N grow large.
double b_opt(const GpuSpec& spec, int weight_bits);

/// Whether streaming A and B tiles through L2 is faster than loading the B
/// tile from global memory, in which case weight loading stays the bottleneck.
bool l2_condition(const GpuSpec& spec, double m, double k_sm, double n_sm);

/// Largest integer batch size satisfying l2_condition (0 if none).
long l2_max_batch(const GpuSpec& spec, double k_sm, double n_sm);

/// 16 / (b + 16/G); group_size 0 means per-column (no scale overhead).
double ideal_speedup(int weight_bits, int group_size);

/// Size ratio against a 16-bit baseline with extra per-weight format bits.
double compression_ratio(int weight_bits, int group_size, double extra_bits);

/// min(1, (P - 1) * t_compute / t_latency).
double pipeline_utilization(int depth, double t_load_latency, double t_compute_per_iter);

}  // namespace marlinlab::perf
