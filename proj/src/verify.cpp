// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "marlinlab/verify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>

#include "marlinlab/codec.hpp"
#include "marlinlab/error.hpp"
#include "marlinlab/layout.hpp"
#include "marlinlab/oracle.hpp"
#include "marlinlab/perfmodel.hpp"
#include "marlinlab/quantizer.hpp"
#include "marlinlab/rng.hpp"
#include "marlinlab/scheduler.hpp"
#include "marlinlab/simgemm.hpp"
#include "marlinlab/sparse24.hpp"

namespace marlinlab::verify {

namespace {

class Checker {
 public:
  explicit Checker(std::string suite) { r_.suite = std::move(suite); }
  void expect(bool cond, const std::string& what) {
    ++r_.checks;
    if (!cond && r_.ok) {
      r_.ok = false;
      r_.detail = what;
    }
  }
  SuiteResult take() { return std::move(r_); }

 private:
  SuiteResult r_;
};

DenseMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return DenseMatrix::from_values(rows, cols, v);
}

void numerics_suite(Checker& c, Rng& rng) {
  for (std::uint32_t b = 0; b < 0x10000; ++b) {
    const Fp16Bits h{static_cast<std::uint16_t>(b)};
    if (!h.is_finite()) continue;
    if (fp16_round(to_double(h)) != h) {
      c.expect(false, "fp16_round does not reproduce pattern " + std::to_string(b));
      break;
    }
  }
  for (int i = 0; i < 5000; ++i) {
    const double x = rng.uniform(-60000.0, 60000.0) * std::ldexp(1.0, -int(rng.below(30)));
    const Fp16Bits r = fp16_round(x);
    const double err = std::fabs(x - to_double(r));
    bool nearest = true;
    for (int d : {-1, 1}) {
      const Fp16Bits n{static_cast<std::uint16_t>(r.bits + d)};
      if (n.is_finite() && (n.bits & 0x8000) == (r.bits & 0x8000)) {
        nearest = nearest && std::fabs(x - to_double(n)) >= err;
      }
    }
    c.expect(nearest, "fp16_round is not nearest");
  }
  const DenseMatrix a = random_matrix(rng, 16, 32, -4, 4);
  c.expect(gemm_reference(a, DenseMatrix::identity(32)).to_fp16() == a, "A * I != A");
}

void quantizer_suite(Checker& c, Rng& rng) {
  const QuantSpec spec{4, 128, true};
  for (int t = 0; t < 20; ++t) {
    const DenseMatrix w = random_matrix(rng, 256, 8, -1, 1);
    const QuantizedWeights q = quantize_symmetric(w, spec);
    q.validate();
    const DenseMatrix d = dequantize(q);
    for (std::size_t k = 0; k < 256; ++k) {
      for (std::size_t n = 0; n < 8; ++n) {
        c.expect(d.at(k, n) == fp16_round(q.code(k, n) * to_double(q.scale(k, n))),
                 "dequantize is not fp16(code * scale)");
      }
    }
  }
  const auto grid = default_clip_grid();
  for (int t = 0; t < 300; ++t) {
    std::vector<double> v(128);
    for (auto& x : v) x = to_double(fp16_round(rng.uniform(-1, 1)));
    v[rng.below(128)] = to_double(fp16_round(rng.uniform(4, 12)));
    const auto err_for = [&](double s) {
      std::vector<double> hat(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double code = std::clamp(round_half_even(v[i] / s), -8.0, 7.0);
        hat[i] = to_double(fp16_round(code * s));
      }
      return reconstruction_error(v, hat);
    };
    const double plain = to_double(search_clip_scale(v, 4, std::array<double, 1>{1.0}));
    const double best = to_double(search_clip_scale(v, 4, grid));
    c.expect(err_for(best) <= err_for(plain), "clip search increased the error");
  }
}

void codec_suite(Checker& c, Rng& rng) {
  c.expect(pack_word({0, 1, 2, 3, 4, 5, 6, 7}) == 0x64207531u, "interleave pattern");
  for (int u = 0; u < 16; ++u) {
    c.expect(decode_slot_fp16(static_cast<std::uint8_t>(u)) == fp16_round(u - 8), "magic decode");
  }
  for (int t = 0; t < 4000; ++t) {
    const Word32 w = static_cast<Word32>(rng.next());
    const Nibbles n = unpack_word(w);
    c.expect(pack_word(n) == w, "pack(unpack(w)) != w");
    for (int p = 0; p < 4; ++p) {
      const auto [x, y] = decode_pair(w, p);
      c.expect(x == fp16_round(n[2 * p] - 8) && y == fp16_round(n[2 * p + 1] - 8), "decode_pair");
    }
  }
  for (int t = 0; t < 12; ++t) {
    const std::size_t K = 64 * (1 + rng.below(4)), N = 64 * (1 + rng.below(3));
    const int g = rng.below(2) ? 64 : kPerColumn;
    const QuantizedWeights q = quantize_symmetric(random_matrix(rng, K, N, -2, 2), {4, g, true});
    const PackedQuantMatrix p = repack_marlin(q);
    const QuantizedWeights back = unpack(p);
    c.expect(back.codes == q.codes && back.scales == q.scales, "repack/unpack round trip");
    for (int i = 0; i < 100; ++i) {
      const std::size_t k = rng.below(K), n = rng.below(N);
      c.expect(logical_code_at(p, k, n) == q.code(k, n), "logical_code_at");
    }
    const PackedQuantMatrix r = pack_raw(q);
    c.expect(unpack(r).codes == q.codes, "raw pack round trip");
  }
}

void layout_suite(Checker& c, Rng&) {
  for (int j = 0; j + 1 < layout::kSwizzleSpan; j += 2) {
    c.expect(layout::simulate_banks(layout::ldmatrix_pattern(j, true)) == 0,
             "swizzled ldmatrix has conflicts");
    c.expect(layout::simulate_banks(layout::ldmatrix_pattern(j, false)) > 0,
             "unswizzled ldmatrix is conflict-free");
  }
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      const auto s = layout::swizzle(i, j);
      c.expect(layout::swizzle(s.row, s.col) == layout::VectorCoord{i, j}, "swizzle involution");
    }
  }
  for (int start = 0; start < 32; ++start) {
    for (int len = 1; len <= 16; ++len) {
      std::vector<int> rows(len);
      for (int r = 0; r < len; ++r) rows[r] = start + r;
      c.expect(layout::contiguous_write_check(rows), "contiguous row group write");
    }
  }
}

void sparse_suite(Checker& c, Rng& rng) {
  for (int t = 0; t < 3000; ++t) {
    std::vector<double> v(4);
    for (auto& x : v) x = double(rng.range(-4, 4));
    const DenseMatrix w = DenseMatrix::from_values(4, 1, v);
    const DenseMatrix p = prune_2of4(w);
    // Brute force: minimal removed energy, ties to the lexicographically lowest kept pair.
    double best = INFINITY;
    std::array<int, 2> keep{};
    for (int a = 0; a < 4; ++a) {
      for (int b = a + 1; b < 4; ++b) {
        double removed = 0;
        for (int i = 0; i < 4; ++i) removed += (i == a || i == b) ? 0 : v[i] * v[i];
        if (removed < best) {
          best = removed;
          keep = {a, b};
        }
      }
    }
    for (int i = 0; i < 4; ++i) {
      const double want = (i == keep[0] || i == keep[1]) ? v[i] : 0.0;
      c.expect(to_double(p.at(i, 0)) == want, "prune_2of4 differs from brute force");
    }
  }
  for (int t = 0; t < 4; ++t) {
    const std::size_t K = 64 * (1 + rng.below(3)), N = 64 * (1 + rng.below(2));
    const int g = t % 2 ? 64 : kPerColumn;
    const DenseMatrix wp = prune_2of4(random_matrix(rng, K, N, -1, 1));
    const Sparse24Matrix s = compress_2of4(wp, {4, g, true}, {}, t % 2);
    c.expect(decompress(s) == dequantize(quantize_symmetric(wp, {4, g, true})),
             "decompress(compress(Wp)) != quant-dequant(Wp)");
    std::vector<std::uint32_t> meta(N * K / 32);
    for (auto& m : meta) m = static_cast<std::uint32_t>(rng.next());
    for (int sel = 0; sel < 2; ++sel) {
      c.expect(restore_metadata(reorder_metadata(meta, N, K, sel), N, K, metadata_order(sel)) == meta,
               "metadata reorder is not invertible");
    }
  }
}

void scheduler_suite(Checker& c, Rng& rng) {
  for (int t = 0; t < 400; ++t) {
    const int rows = 1 + int(rng.below(12)), cols = 1 + int(rng.below(12)), sms = 1 + int(rng.below(40));
    const StripeAssignment a = plan_stripes(rows, cols, sms);
    try {
      a.validate();
      c.expect(true, "");
    } catch (const Error& e) {
      c.expect(false, e.what());
    }
    for (int sm = 0; sm < sms; ++sm) c.expect(a.load(sm) <= a.T, "load above T");
    for (const auto& list : column_contributions(a)) {
      for (std::size_t i = 1; i < list.size(); ++i) {
        c.expect(a.stripes[list[i - 1].sm][list[i - 1].stripe].row_start >
                     a.stripes[list[i].sm][list[i].stripe].row_start,
                 "reduction order is not bottom-to-top");
      }
    }
  }
  for (int n_sm : {64, 128, 256}) {
    for (int warps : {4, 8}) {
      TilingConfig cfg;
      cfg.n_sm = n_sm;
      cfg.warps = warps;
      if (warps % cfg.n_blocks() != 0) continue;
      std::map<std::pair<int, int>, int> seen;
      for (int w = 0; w < warps; ++w) {
        for (const SubTile& s : warp_iteration(cfg, w)) ++seen[{s.i, s.j}];
      }
      bool exact = int(seen.size()) == cfg.k_blocks() * cfg.n_blocks();
      for (const auto& [key, count] : seen) exact = exact && count == 1;
      c.expect(exact, "warp iteration is not an exact cover");
    }
  }
}

void perfmodel_suite(Checker& c, Rng&) {
  const perf::GpuSpec a10 = perf::GpuSpec::a10();
  int flips = 0;
  perf::Regime prev = perf::Regime::memory_bound;
  for (int m = 1; m <= 256; ++m) {
    const auto r = perf::roofline(a10, {double(m), 4096, 4096, 4, 128});
    if (m > 1 && r.regime != prev) ++flips;
    prev = r.regime;
  }
  c.expect(flips == 1, "roofline regime does not flip exactly once");
  c.expect(std::fabs(perf::ideal_speedup(4, 128) - 3.8787878) < 1e-6, "ideal speedup at G=128");
  c.expect(perf::ideal_speedup(4, kPerColumn) == 4.0, "ideal speedup per-column");
  c.expect(perf::l2_condition(a10, 64, 64, 256), "L2 condition at M = 64");
}

void simgemm_suite(Checker& c, Rng& rng) {
  for (int t = 0; t < 6; ++t) {
    const std::size_t M = 1 + rng.below(64), K = 64 * (1 + rng.below(4)), N = 64 * (1 + rng.below(2));
    const int g = t % 2 ? 64 : kPerColumn;
    const DenseMatrix a = random_matrix(rng, M, K, -1, 1);
    const QuantizedWeights q = quantize_symmetric(random_matrix(rng, K, N, -1, 1), {4, g, true});
    TilingConfig cfg;
    cfg.n_sm = 64;
    const StripeAssignment plan = make_plan(M, K, N, cfg, 1 + int(rng.below(6)));
    const auto one = sim::marlin_gemm(a, repack_marlin(q), cfg, plan, {1});
    const auto many = sim::marlin_gemm(a, repack_marlin(q), cfg, plan, {3});
    c.expect(one.out.C == oracle::reference_marlin_gemm(a, q, cfg, plan), "engine != reference");
    c.expect(one.out.C == many.out.C, "engine output depends on worker count");
    c.expect(oracle::normwise_relative_error(one.out.C, oracle::naive_gemm(a, q)) <= 1e-2,
             "engine far from naive oracle");
    const auto& loads = one.trace.b_word_loads;
    c.expect(std::all_of(loads.begin(), loads.end(), [](std::uint32_t x) { return x == 1; }),
             "B word loaded other than once");
  }
}

const std::map<std::string, std::function<void(Checker&, Rng&)>>& suites() {
  static const std::map<std::string, std::function<void(Checker&, Rng&)>> table{
      {"numerics", numerics_suite},   {"quantizer", quantizer_suite}, {"codec", codec_suite},
      {"layout", layout_suite},       {"sparse24", sparse_suite},     {"scheduler", scheduler_suite},
      {"perfmodel", perfmodel_suite}, {"simgemm", simgemm_suite}};
  return table;
}

}  // namespace

std::vector<std::string> suite_names() {
  return {"numerics", "quantizer", "codec", "layout", "sparse24", "scheduler", "perfmodel", "simgemm"};
}

SuiteResult run_suite(const std::string& name, std::uint64_t seed) {
  const auto it = suites().find(name);
  require(it != suites().end(), "verify: unknown suite '" + name + "'");
  Checker c(name);
  Rng rng(seed);
  try {
    it->second(c, rng);
  } catch (const std::exception& e) {
    c.expect(false, std::string("exception: ") + e.what());
  }
  return c.take();
}

std::vector<SuiteResult> run_all(std::uint64_t seed) {
  std::vector<SuiteResult> out;
  for (const auto& name : suite_names()) out.push_back(run_suite(name, seed));
  return out;
}

}  // namespace marlinlab::verify
