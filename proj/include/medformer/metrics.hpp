#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace mf {

// Dice similarity coefficient for one class: 2|P n G| / (|P| + |G|).
// Both masks empty is defined as 1.0, exactly one empty as 0.0.
inline double dsc(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt,
                  int cls) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("dsc: mask size mismatch " + std::to_string(pred.size()) +
                                " vs " + std::to_string(gt.size()));
  std::size_t np = 0, ng = 0, inter = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == cls, g = gt[i] == cls;
    np += p;
    ng += g;
    inter += p && g;
  }
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

namespace detail {

// Boundary pixel: in the mask with at least one 4-neighbor outside it
// (outside the image counts as background).
inline std::vector<std::size_t> boundary_pixels(const std::vector<std::uint8_t>& mask,
                                                std::size_t H, std::size_t W, int cls) {
  std::vector<std::size_t> out;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      if (mask[y * W + x] != cls) continue;
      const bool edge = y == 0 || y + 1 == H || x == 0 || x + 1 == W ||
                        mask[(y - 1) * W + x] != cls || mask[(y + 1) * W + x] != cls ||
                        mask[y * W + x - 1] != cls || mask[y * W + x + 1] != cls;
      if (edge) out.push_back(y * W + x);
    }
  return out;
}

// Felzenszwalb 1D squared distance transform with sample spacing s.
inline void edt1d(std::vector<double>& f, double s) {
  const std::size_t n = f.size();
  std::vector<int> v(n);
  std::vector<double> z(n + 1), d(n);
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  const double s2 = s * s;
  for (int q = 1; q < static_cast<int>(n); ++q) {
    double sq;
    while (true) {
      const int p = v[k];
      sq = (f[q] + s2 * q * q - f[p] - s2 * p * p) / (2.0 * s2 * (q - p));
      if (sq > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = sq;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < static_cast<int>(n); ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = s * (q - v[k]);
    d[q] = dq * dq + f[v[k]];
  }
  f = d;
}

// Exact anisotropic squared Euclidean distance transform to a seed set.
inline std::vector<double> edt2d(const std::vector<std::uint8_t>& seed, std::size_t H,
                                 std::size_t W, double sy, double sx) {
  // Large finite sentinel: rows without seeds would produce inf - inf = NaN
  // inside the lower-envelope computation.
  const double inf = 1e30;
  std::vector<double> dist(H * W);
  for (std::size_t i = 0; i < H * W; ++i) dist[i] = seed[i] ? 0.0 : inf;
  std::vector<double> line;
  for (std::size_t y = 0; y < H; ++y) {
    line.assign(dist.begin() + y * W, dist.begin() + (y + 1) * W);
    edt1d(line, sx);
    std::copy(line.begin(), line.end(), dist.begin() + y * W);
  }
  line.resize(H);
  for (std::size_t x = 0; x < W; ++x) {
    for (std::size_t y = 0; y < H; ++y) line[y] = dist[y * W + x];
    edt1d(line, sy);
    for (std::size_t y = 0; y < H; ++y) dist[y * W + x] = line[y];
  }
  return dist;
}

inline double percentile_linear(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

}  // namespace detail

// 95th percentile of the pooled symmetric boundary distances between the two
// class masks, in physical units. Distances are computed with an exact
// anisotropic Euclidean distance transform. Returns +infinity when either
// mask is empty; callers must surface the sentinel, never fold it to 0.
inline double hd95(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt,
                   std::size_t H, std::size_t W, int cls, double sy = 1.0, double sx = 1.0) {
  if (pred.size() != H * W || gt.size() != H * W)
    throw std::invalid_argument("hd95: mask extent mismatch");
  auto bp = detail::boundary_pixels(pred, H, W, cls);
  auto bg = detail::boundary_pixels(gt, H, W, cls);
  if (bp.empty() || bg.empty()) return std::numeric_limits<double>::infinity();

  std::vector<std::uint8_t> seed_p(H * W, 0), seed_g(H * W, 0);
  for (auto i : bp) seed_p[i] = 1;
  for (auto i : bg) seed_g[i] = 1;
  auto dist_to_g = detail::edt2d(seed_g, H, W, sy, sx);
  auto dist_to_p = detail::edt2d(seed_p, H, W, sy, sx);

  std::vector<double> pooled;
  pooled.reserve(bp.size() + bg.size());
  for (auto i : bp) pooled.push_back(std::sqrt(dist_to_g[i]));
  for (auto i : bg) pooled.push_back(std::sqrt(dist_to_p[i]));
  return detail::percentile_linear(std::move(pooled), 0.95);
}

}  // namespace mf
