// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

// marlinlab command-line front end.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "marlinlab/codec.hpp"
#include "marlinlab/error.hpp"
#include "marlinlab/io.hpp"
#include "marlinlab/oracle.hpp"
#include "marlinlab/perfmodel.hpp"
#include "marlinlab/quantizer.hpp"
#include "marlinlab/report.hpp"
#include "marlinlab/rng.hpp"
#include "marlinlab/scheduler.hpp"
#include "marlinlab/simgemm.hpp"
#include "marlinlab/sparse24.hpp"
#include "marlinlab/verify.hpp"

namespace ml = marlinlab;

namespace {

struct TilingArgs {
  int n_sm = 256;
  int k_sm = 64;
  int warps = 8;
  int pipeline = 4;
  int sms = 72;

  void add_to(CLI::App* app) {
    app->add_option("--n-sm", n_sm, "Output columns per SM tile (64, 128, 256)");
    app->add_option("--k-sm", k_sm, "Reduction depth per SM tile (multiple of 64)");
    app->add_option("--warps", warps, "Warps per SM");
    app->add_option("--pipeline", pipeline, "Prefetch depth");
    app->add_option("--sms", sms, "Simulated SM count")->check(CLI::PositiveNumber);
  }
  ml::TilingConfig config() const {
    ml::TilingConfig c;
    c.n_sm = n_sm;
    c.k_sm = k_sm;
    c.warps = warps;
    c.pipeline = pipeline;
    c.validate();
    return c;
  }
};

unsigned worker_count() {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  return std::min(hw, ml::sim::workers_from_env(hw));
}

double relative_error(const ml::DenseMatrix& w, const ml::DenseMatrix& w_hat) {
  const auto v = w.to_values();
  const auto h = w_hat.to_values();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    num += (v[i] - h[i]) * (v[i] - h[i]);
    den += v[i] * v[i];
  }
  return den == 0 ? std::sqrt(num) : std::sqrt(num / den);
}

void write_json(const std::string& path, const nlohmann::json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  ml::require(static_cast<bool>(out), "cannot write " + path);
  out << j.dump(2) << "\n";
}

/// "1..256", "1,8,16" or a mix; ranges are inclusive.
std::vector<long> parse_batches(const std::string& spec) {
  std::vector<long> out;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const std::size_t comma = std::min(spec.find(',', pos), spec.size());
    const std::string item = spec.substr(pos, comma - pos);
    const std::size_t dots = item.find("..");
    try {
      if (dots == std::string::npos) {
        out.push_back(std::stol(item));
      } else {
        const long lo = std::stol(item.substr(0, dots)), hi = std::stol(item.substr(dots + 2));
        ml::require(lo <= hi, "batch range is empty: " + item);
        for (long m = lo; m <= hi; ++m) out.push_back(m);
      }
    } catch (const std::logic_error&) {
      throw ml::Error("invalid batch list item '" + item + "'");
    }
    pos = comma + 1;
  }
  for (long m : out) ml::require(m > 0, "batch sizes must be positive");
  return out;
}

int cmd_random(std::size_t rows, std::size_t cols, double lo, double hi, bool integer,
               std::uint64_t seed, const std::string& out) {
  ml::Rng rng(seed);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = integer ? double(rng.range(long(lo), long(hi))) : rng.uniform(lo, hi);
  ml::io::write_f16m(out, ml::DenseMatrix::from_values(rows, cols, v));
  return 0;
}

int cmd_quantize(const std::string& in, const std::string& out, int group, bool clip,
                 const std::string& layout) {
  const ml::DenseMatrix w = ml::io::read_f16m(in);
  ml::require(w.rows() % 64 == 0 && w.cols() % 64 == 0, "quantize: K and N must be divisible by 64");
  const ml::QuantSpec spec{4, group, true};
  spec.validate();
  const auto grid = ml::default_clip_grid();
  const ml::QuantizedWeights q = clip ? ml::quantize_symmetric(w, spec, grid)
                                      : ml::quantize_symmetric(w, spec);
  const ml::PackedQuantMatrix p = layout == "raw" ? ml::pack_raw(q) : ml::repack_marlin(q);
  const auto bytes = ml::io::encode_mq4(p);
  ml::io::write_file(out, bytes);
  std::printf("shape: %zu x %zu\n", q.K, q.N);
  std::printf("group_size: %d\n", group);
  std::printf("layout: %s\n", layout.c_str());
  std::printf("bits_per_weight: %.6f\n", p.bits_per_weight());
  std::printf("file_bits_per_weight: %.6f\n", 8.0 * bytes.size() / double(q.K * q.N));
  std::printf("eps_r: %.6e\n", relative_error(w, ml::dequantize(q)));
  if (clip) {
    std::printf("eps_r_noclip: %.6e\n",
                relative_error(w, ml::dequantize(ml::quantize_symmetric(w, spec))));
  }
  return 0;
}

int cmd_sparsify(const std::string& in, const std::string& out, int group, bool clip, int selector) {
  const ml::DenseMatrix w = ml::io::read_f16m(in);
  const ml::QuantSpec spec{4, group, true};
  spec.validate();
  const ml::DenseMatrix wp = ml::prune_2of4(w);
  const auto grid = ml::default_clip_grid();
  const ml::Sparse24Matrix s = clip ? ml::compress_2of4(wp, spec, grid, selector)
                                    : ml::compress_2of4(wp, spec, {}, selector);
  const auto bytes = ml::io::encode_mq4(s);
  ml::io::write_file(out, bytes);
  std::printf("shape: %zu x %zu\n", w.rows(), w.cols());
  std::printf("group_size: %d\n", group);
  std::printf("selector: %d\n", selector);
  std::printf("bits_per_weight: %.6f\n", s.bits_per_weight());
  std::printf("file_bits_per_weight: %.6f\n", 8.0 * bytes.size() / double(w.rows() * w.cols()));
  std::printf("eps_r_prune: %.6e\n", relative_error(w, wp));
  std::printf("eps_r: %.6e\n", relative_error(w, ml::decompress(s)));
  return 0;
}

struct CheckOutcome {
  bool exact = true;
  double rel = 0;
};

CheckOutcome check_dense(const ml::DenseMatrix& a, const ml::QuantizedWeights& q,
                         const ml::TilingConfig& cfg, const ml::StripeAssignment& plan,
                         const ml::DenseMatrix& c) {
  CheckOutcome o;
  o.exact = c == ml::oracle::reference_marlin_gemm(a, q, cfg, plan);
  o.rel = ml::oracle::normwise_relative_error(c, ml::oracle::naive_gemm(a, q));
  return o;
}

int report_check(const CheckOutcome& o) {
  const bool ok = o.exact && o.rel <= 1e-2;
  std::printf("check: reference %s, naive relative error %.3e -> %s\n",
              o.exact ? "bit-exact" : "MISMATCH", o.rel, ok ? "ok" : "FAILED");
  return ok ? 0 : 1;
}

int cmd_gemm(const std::string& a_path, const std::string& b_path, const std::string& out,
             const std::string& trace, const TilingArgs& t, bool check, bool sparse) {
  const ml::DenseMatrix a = ml::io::read_f16m(a_path);
  const ml::io::Mq4Contents contents = ml::io::read_mq4(b_path);
  const ml::TilingConfig cfg = t.config();
  const ml::sim::SimOptions opt{worker_count()};

  ml::sim::GemmRun run;
  ml::QuantizedWeights q;
  ml::StripeAssignment plan;
  if (sparse) {
    const auto* s = std::get_if<ml::Sparse24Matrix>(&contents);
    ml::require(s != nullptr, "sparse-gemm: weight file has no sparse section");
    plan = ml::make_plan(a.rows(), s->K, s->N, cfg, t.sms);
    run = ml::sim::sparse_marlin_gemm(a, *s, cfg, plan, opt);
    if (check) q = ml::expand_codes(*s);
  } else {
    const auto* p = std::get_if<ml::PackedQuantMatrix>(&contents);
    ml::require(p != nullptr, "gemm: weight file is sparse; use sparse-gemm");
    plan = ml::make_plan(a.rows(), p->K, p->N, cfg, t.sms);
    run = ml::sim::marlin_gemm(a, *p, cfg, plan, opt);
    if (check) q = ml::unpack(*p);
  }
  if (!out.empty()) ml::io::write_f16m(out, run.out.C);
  if (!trace.empty()) write_json(trace, ml::report::trace_report(ml::sim::execution_trace(run)));
  const auto totals = run.trace.totals();
  std::printf("shape: %zu x %zu x %zu\n", a.rows(), a.cols(), run.out.C.cols());
  std::printf("sms: %d, tiles: %zu, mma_ops: %zu, reduction_steps: %zu\n", plan.sms, totals.tiles,
              totals.mma_ops, totals.reduction_steps);
  if (!check) return 0;

  int rc = report_check(check_dense(a, q, cfg, plan, run.out.C));
  if (sparse) {
    const auto dense = ml::sim::marlin_gemm(a, ml::repack_marlin(q), cfg, plan, opt);
    const bool same = dense.out.C == run.out.C;
    std::printf("check: sparse vs decompressed dense %s\n", same ? "bit-exact" : "MISMATCH");
    if (!same) rc = 1;
  }
  return rc;
}

/// Seeded shapes with M <= 64, K, N <= 512, alternating per-column and G = 128.
int cmd_gemm_random(int count, std::uint64_t seed, const TilingArgs& t) {
  ml::Rng rng(seed);
  const unsigned workers = worker_count();
  int failures = 0;
  for (int i = 0; i < count; ++i) {
    const std::size_t M = 1 + rng.below(64);
    const std::size_t K = 128 * (1 + rng.below(4));
    const std::size_t N = 64 * (1 + rng.below(8));
    const int group = i % 2 == 0 ? 128 : ml::kPerColumn;
    std::vector<double> av(M * K), wv(K * N);
    for (auto& x : av) x = rng.uniform(-1, 1);
    for (auto& x : wv) x = rng.uniform(-1, 1);
    const auto a = ml::DenseMatrix::from_values(M, K, av);
    const auto q = ml::quantize_symmetric(ml::DenseMatrix::from_values(K, N, wv), {4, group, true});
    ml::TilingConfig cfg = t.config();
    cfg.n_sm = 64;
    const auto plan = ml::make_plan(M, K, N, cfg, 1 + int(rng.below(16)));
    const auto run = ml::sim::marlin_gemm(a, ml::repack_marlin(q), cfg, plan, {workers});
    const CheckOutcome o = check_dense(a, q, cfg, plan, run.out.C);
    if (!o.exact || o.rel > 1e-2) {
      ++failures;
      std::printf("case %d (M=%zu K=%zu N=%zu G=%d): %s, rel %.3e\n", i, M, K, N, group,
                  o.exact ? "exact" : "MISMATCH", o.rel);
    }
  }
  std::printf("random gemm check: %d/%d cases passed\n", count - failures, count);
  return failures == 0 ? 0 : 1;
}

int cmd_plan(int rows, int cols, int sms, long m, const std::string& out) {
  ml::StripeAssignment plan = ml::plan_stripes(rows, cols, sms);
  if (m > 0) plan = ml::replicate_large_batch(std::size_t(m), plan);
  write_json(out, ml::report::plan_report(plan));
  return 0;
}

int cmd_roofline(const std::string& gpu, double k, double n, int bits, int group,
                 const std::string& batches, int k_sm, int n_sm, const std::string& out) {
  const ml::perf::GpuSpec spec = gpu.empty() ? ml::perf::GpuSpec::a10() : ml::perf::load_gpu_spec(gpu);
  ml::perf::ProblemShape base{1, k, n, bits, group};
  base.validate();
  const std::string csv = ml::report::roofline_csv(spec, base, parse_batches(batches), k_sm, n_sm);
  if (out.empty() || out == "-") {
    std::cout << csv;
  } else {
    std::ofstream f(out, std::ios::trunc);
    ml::require(static_cast<bool>(f), "cannot write " + out);
    f << csv;
  }
  return 0;
}

int cmd_verify(bool all, const std::vector<std::string>& names, std::uint64_t seed) {
  std::vector<std::string> run = names;
  if (all || run.empty()) run = ml::verify::suite_names();
  int failed = 0;
  for (const auto& name : run) {
    const auto r = ml::verify::run_suite(name, seed);
    std::printf("%s %-10s %zu checks%s%s\n", r.ok ? "PASS" : "FAIL", r.suite.c_str(), r.checks,
                r.ok ? "" : ": ", r.detail.c_str());
    if (!r.ok) ++failed;
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"marlinlab: bit-exact CPU simulator of a mixed-precision FP16 x INT4 GEMM"};
  app.require_subcommand(1);
  int rc = 0;

  // random
  auto* random = app.add_subcommand("random", "Write a seeded random .f16m matrix");
  std::size_t r_rows = 0, r_cols = 0;
  double r_lo = -1, r_hi = 1;
  bool r_int = false;
  std::uint64_t r_seed = 0;
  std::string r_out;
  random->add_option("--rows", r_rows, "Rows")->required()->check(CLI::PositiveNumber);
  random->add_option("--cols", r_cols, "Columns")->required()->check(CLI::PositiveNumber);
  random->add_option("--lo", r_lo, "Lower bound");
  random->add_option("--hi", r_hi, "Upper bound");
  random->add_flag("--int", r_int, "Integers in [lo, hi] instead of reals");
  random->add_option("--seed", r_seed, "PRNG seed");
  random->add_option("--out", r_out, "Output .f16m")->required();
  random->callback([&] { rc = cmd_random(r_rows, r_cols, r_lo, r_hi, r_int, r_seed, r_out); });

  // quantize
  auto* quant = app.add_subcommand("quantize", "Quantize a .f16m weight matrix to .mq4");
  std::string q_in, q_out, q_layout = "marlin";
  int q_group = 128;
  bool q_clip = false;
  quant->add_option("--in", q_in, "Input K x N .f16m")->required();
  quant->add_option("--out", q_out, "Output .mq4")->required();
  quant->add_option("--group", q_group, "Group size (0 = per-column)");
  quant->add_flag("--clip-search", q_clip, "Search clipping thresholds per group");
  quant->add_option("--layout", q_layout, "marlin or raw")->check(CLI::IsMember({"marlin", "raw"}));
  quant->callback([&] { rc = cmd_quantize(q_in, q_out, q_group, q_clip, q_layout); });

  // sparsify
  auto* sparsify = app.add_subcommand("sparsify", "Prune 2:4, quantize and compress to .mq4");
  std::string s_in, s_out;
  int s_group = 128, s_selector = 0;
  bool s_clip = false;
  sparsify->add_option("--in", s_in, "Input K x N .f16m")->required();
  sparsify->add_option("--out", s_out, "Output .mq4")->required();
  sparsify->add_option("--group", s_group, "Group size (0 = per-column)");
  sparsify->add_option("--selector", s_selector, "Sparsity selector")->check(CLI::Range(0, 1));
  sparsify->add_flag("--clip-search", s_clip, "Search clipping thresholds per group");
  sparsify->callback([&] { rc = cmd_sparsify(s_in, s_out, s_group, s_clip, s_selector); });

  // gemm and sparse-gemm
  TilingArgs g_tiling, sg_tiling;
  std::string g_a, g_b, g_out, g_trace;
  bool g_check = false;
  int g_random = 0;
  std::uint64_t g_seed = 0;
  auto* gemm = app.add_subcommand("gemm", "Run the simulated dense kernel");
  gemm->add_option("--a", g_a, "Activations M x K .f16m");
  gemm->add_option("--b", g_b, "Weights .mq4");
  gemm->add_option("--out", g_out, "Output M x N .f16m");
  gemm->add_option("--trace", g_trace, "Trace report JSON ('-' for stdout)");
  gemm->add_flag("--check", g_check, "Compare against the reference paths");
  gemm->add_option("--random", g_random, "Check this many seeded random shapes instead");
  gemm->add_option("--seed", g_seed, "PRNG seed for --random");
  g_tiling.add_to(gemm);
  gemm->callback([&] {
    if (g_random > 0) {
      rc = cmd_gemm_random(g_random, g_seed, g_tiling);
      return;
    }
    ml::require(!g_a.empty() && !g_b.empty(), "gemm: --a and --b are required");
    rc = cmd_gemm(g_a, g_b, g_out, g_trace, g_tiling, g_check, false);
  });

  std::string sg_a, sg_b, sg_out, sg_trace;
  bool sg_check = false;
  auto* sgemm = app.add_subcommand("sparse-gemm", "Run the simulated 2:4 sparse kernel");
  sgemm->add_option("--a", sg_a, "Activations M x K .f16m")->required();
  sgemm->add_option("--b", sg_b, "Sparse weights .mq4")->required();
  sgemm->add_option("--out", sg_out, "Output M x N .f16m");
  sgemm->add_option("--trace", sg_trace, "Trace report JSON ('-' for stdout)");
  sgemm->add_flag("--check", sg_check, "Compare against the dense paths");
  sg_tiling.add_to(sgemm);
  sgemm->callback([&] { rc = cmd_gemm(sg_a, sg_b, sg_out, sg_trace, sg_tiling, sg_check, true); });

  // plan
  auto* plan = app.add_subcommand("plan", "Striped partition and reduction order as JSON");
  int p_rows = 0, p_cols = 0, p_sms = 0;
  long p_m = 0;
  std::string p_out;
  plan->add_option("--rows", p_rows, "Tile rows (K / k_sm)")->required()->check(CLI::PositiveNumber);
  plan->add_option("--cols", p_cols, "Tile columns (N / n_sm)")->required()->check(CLI::PositiveNumber);
  plan->add_option("--sms", p_sms, "SM count")->required()->check(CLI::PositiveNumber);
  plan->add_option("--batch", p_m, "Batch size; above 64 the grid is replicated");
  plan->add_option("--out", p_out, "Output JSON (default stdout)");
  plan->callback([&] { rc = cmd_plan(p_rows, p_cols, p_sms, p_m, p_out); });

  // roofline
  auto* roof = app.add_subcommand("roofline", "Roofline sweep over batch sizes as CSV");
  std::string rf_gpu, rf_batches = "1..256", rf_out;
  double rf_k = 4096, rf_n = 4096;
  int rf_bits = 4, rf_group = 128, rf_ksm = 64, rf_nsm = 256;
  roof->add_option("--gpu", rf_gpu, "GPU spec JSON (default: built-in A10)");
  roof->add_option("--k", rf_k, "K")->check(CLI::PositiveNumber);
  roof->add_option("--n", rf_n, "N")->check(CLI::PositiveNumber);
  roof->add_option("--bits", rf_bits, "Weight bits (4 or 16)");
  roof->add_option("--group", rf_group, "Group size (0 = per-column)");
  roof->add_option("--batch", rf_batches, "Batches, e.g. 1..256 or 1,8,16");
  roof->add_option("--k-sm", rf_ksm, "SM tile depth for the L2 condition");
  roof->add_option("--n-sm", rf_nsm, "SM tile width for the L2 condition");
  roof->add_option("--out", rf_out, "Output CSV (default stdout)");
  roof->callback([&] {
    rc = cmd_roofline(rf_gpu, rf_k, rf_n, rf_bits, rf_group, rf_batches, rf_ksm, rf_nsm, rf_out);
  });

  // verify
  auto* ver = app.add_subcommand("verify", "Run the seeded property suites");
  bool v_all = false;
  std::vector<std::string> v_suites;
  std::uint64_t v_seed = 0;
  ver->add_flag("--all", v_all, "Run every suite");
  ver->add_option("--suite", v_suites, "Suite name (repeatable)");
  ver->add_option("--seed", v_seed, "PRNG seed");
  ver->callback([&] { rc = cmd_verify(v_all, v_suites, v_seed); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return rc;
}
