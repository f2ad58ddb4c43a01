#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "medformer/attention.hpp"
#include "medformer/macs.hpp"
#include "medformer/semantic_map.hpp"

namespace mf {

enum class BenchVariant { conv, mhsa, window, bmha };

inline std::string to_string(BenchVariant v) {
  switch (v) {
    case BenchVariant::conv: return "conv";
    case BenchVariant::mhsa: return "mhsa";
    case BenchVariant::window: return "window";
    case BenchVariant::bmha: return "bmha";
  }
  return "?";
}

inline BenchVariant bench_variant_from(const std::string& s) {
  if (s == "conv") return BenchVariant::conv;
  if (s == "mhsa") return BenchVariant::mhsa;
  if (s == "window") return BenchVariant::window;
  if (s == "bmha") return BenchVariant::bmha;
  throw ValueError("bench: unknown variant '" + s + "'");
}

// Closed-form MAC counts from the complexity table:
//   conv   k^2 H W d^2
//   mhsa   4 H W d^2 + 2 (HW)^2 d
//   window 8 H W d^2 + 4 M^2 H W d
//   bmha   3 H W d^2 + 3 hw H W d
inline std::uint64_t formula_macs(BenchVariant v, std::uint64_t H, std::uint64_t W,
                                  std::uint64_t d, std::uint64_t k = 3, std::uint64_t M = 1,
                                  std::uint64_t hw = 16) {
  const std::uint64_t n = H * W;
  switch (v) {
    case BenchVariant::conv: return k * k * n * d * d;
    case BenchVariant::mhsa: return 4 * n * d * d + 2 * n * n * d;
    case BenchVariant::window: return 8 * n * d * d + 4 * M * M * n * d;
    case BenchVariant::bmha: return 3 * n * d * d + 3 * hw * n * d;
  }
  return 0;
}

// Runs the instrumented forward path for one variant and returns the MACs
// actually executed by the matmul/conv kernels.
inline std::uint64_t measured_macs(BenchVariant v, std::size_t H, std::size_t W, std::size_t d,
                                   std::size_t k = 3, std::size_t M = 4, std::size_t sem_h = 4,
                                   std::size_t sem_w = 4, std::uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  auto x = Tensor<float>::randn(Shape{d, H, W}, rng);
  switch (v) {
    case BenchVariant::conv: {
      Conv2dLayer<float> c;
      c.init(d, d, k, 1, static_cast<int>(k / 2), 1, rng);
      reset_macs();
      c(x);
      return macs();
    }
    case BenchVariant::mhsa: {
      DenseMhsa<float> a;
      a.init(d, 1, rng);
      reset_macs();
      a(x);
      return macs();
    }
    case BenchVariant::window: {
      DenseMhsa<float> a;
      a.init(d, 1, rng);
      reset_macs();
      window_mhsa_forward(x, a, M);
      return macs();
    }
    case BenchVariant::bmha: {
      AttnConfig c;
      c.d = d;
      c.n_heads = 1;
      c.k = k;
      c.sem_h = sem_h;
      c.sem_w = sem_w;
      BmhaBlock<float> b;
      b.init(c, rng);
      auto m = Tensor<float>::randn(Shape{d, sem_h, sem_w}, rng);
      reset_macs();
      b(x, m);
      return macs();
    }
  }
  return 0;
}

struct LinearityFit {
  double slope = 0.0;
  double r2 = 0.0;
};

// Least-squares fit of log(MACs) against log(n) over a measured sweep.
inline LinearityFit linearity_fit(const std::vector<std::pair<std::uint64_t, std::uint64_t>>& pts) {
  if (pts.size() < 3)
    throw ValueError("linearity_fit: need at least 3 sweep points, got " +
                     std::to_string(pts.size()));
  const double n = static_cast<double>(pts.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (auto [tokens, m] : pts) {
    const double lx = std::log(static_cast<double>(tokens));
    const double ly = std::log(static_cast<double>(m));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    syy += ly * ly;
  }
  LinearityFit f;
  const double cov = sxy - sx * sy / n;
  const double varx = sxx - sx * sx / n;
  const double vary = syy - sy * sy / n;
  f.slope = cov / varx;
  f.r2 = (cov * cov) / (varx * vary);
  return f;
}

// Measured sweep at fixed d over side-length doublings (n quadruples per step).
inline std::vector<std::pair<std::uint64_t, std::uint64_t>> sweep_macs(
    BenchVariant v, const std::vector<std::size_t>& sides, std::size_t d, std::size_t k = 3,
    std::size_t M = 4, std::size_t sem_h = 4, std::size_t sem_w = 4) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pts;
  for (auto s : sides)
    pts.push_back({static_cast<std::uint64_t>(s) * s,
                   measured_macs(v, s, s, d, k, M, sem_h, sem_w)});
  return pts;
}

struct BenchRow {
  BenchVariant variant;
  std::size_t H, W, d;
  std::uint64_t formula, measured;
  double wall_ms;
};

// Deterministic ordering: rows appear in the order given.
inline std::string bench_report(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "variant,H,W,d,formula_macs,measured_macs,ratio,wall_ms\n";
  os.precision(6);
  for (const auto& r : rows)
    os << to_string(r.variant) << "," << r.H << "," << r.W << "," << r.d << "," << r.formula
       << "," << r.measured << ","
       << static_cast<double>(r.measured) / static_cast<double>(r.formula) << "," << r.wall_ms
       << "\n";
  return os.str();
}

inline BenchRow bench_one(BenchVariant v, std::size_t H, std::size_t W, std::size_t d,
                          std::size_t k = 3, std::size_t M = 4, std::size_t sem_h = 4,
                          std::size_t sem_w = 4) {
  BenchRow r{v, H, W, d, 0, 0, 0.0};
  r.formula = formula_macs(v, H, W, d, k, M, sem_h * sem_w);
  const auto t0 = std::chrono::steady_clock::now();
  r.measured = measured_macs(v, H, W, d, k, M, sem_h, sem_w);
  const auto t1 = std::chrono::steady_clock::now();
  r.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return r;
}

}  // namespace mf
