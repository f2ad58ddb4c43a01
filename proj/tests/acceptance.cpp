// Acceptance gate: one pass/fail line per criterion, nonzero exit if any fail.
// Every check here is backed by an oracle independent of the implementation:
// finite differences, naive loops, closed-form hand values, or bitwise replay.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "medformer/bench.hpp"
#include "medformer/data.hpp"
#include "medformer/fusion.hpp"
#include "medformer/gradcheck.hpp"
#include "medformer/losses.hpp"
#include "medformer/metrics.hpp"
#include "medformer/trainer.hpp"

using namespace mf;
using T64 = Tensor<double>;

namespace {

// ---------------------------------------------------------------- oracles

// Naive per-head attention: plain loops, local softmax.
std::vector<double> naive_mha(const T64& q, const T64& k, const T64& v, int heads) {
  const std::size_t n = q.dim(0), m = k.dim(0), d = q.dim(1);
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  std::vector<double> out(n * d, 0.0);
  for (int h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> logits(m);
      double mx = -1e300;
      for (std::size_t j = 0; j < m; ++j) {
        double dot = 0;
        for (std::size_t c = 0; c < dh; ++c)
          dot += q[i * d + h * dh + c] * k[j * d + h * dh + c];
        logits[j] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, logits[j]);
      }
      double z = 0;
      for (std::size_t j = 0; j < m; ++j) {
        logits[j] = std::exp(logits[j] - mx);
        z += logits[j];
      }
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t c = 0; c < dh; ++c)
          out[i * d + h * dh + c] += logits[j] / z * v[j * d + h * dh + c];
    }
  }
  return out;
}

// Copy of a shared-QK block into one with independent (but equal) key paths.
BmhaBlock<double> make_indep_copy(const BmhaBlock<double>& b) {
  AttnConfig cfg = b.cfg;
  cfg.share_qk = false;
  BmhaBlock<double> c;
  std::mt19937_64 rng(1);
  c.init(cfg, rng);
  auto copy = [](auto& dst, const auto& src) { dst.vec() = src.vec(); };
  copy(c.norm_x1.gamma, b.norm_x1.gamma);
  copy(c.norm_x1.beta, b.norm_x1.beta);
  copy(c.norm_x2.gamma, b.norm_x2.gamma);
  copy(c.norm_x2.beta, b.norm_x2.beta);
  copy(c.norm_m1.gamma, b.norm_m1.gamma);
  copy(c.norm_m1.beta, b.norm_m1.beta);
  copy(c.norm_m2.gamma, b.norm_m2.gamma);
  copy(c.norm_m2.beta, b.norm_m2.beta);
  copy(c.qk_x.dw.w, b.qk_x.dw.w);
  copy(c.qk_x.pw.w, b.qk_x.pw.w);
  copy(c.qk_x.pw.b, b.qk_x.pw.b);
  copy(c.v_x.dw.w, b.v_x.dw.w);
  copy(c.v_x.pw.w, b.v_x.pw.w);
  copy(c.v_x.pw.b, b.v_x.pw.b);
  copy(c.k_x.dw.w, b.qk_x.dw.w);
  copy(c.k_x.pw.w, b.qk_x.pw.w);
  copy(c.k_x.pw.b, b.qk_x.pw.b);
  copy(c.qk_m.w, b.qk_m.w);
  copy(c.qk_m.b, b.qk_m.b);
  copy(c.k_m.w, b.qk_m.w);
  copy(c.k_m.b, b.qk_m.b);
  copy(c.v_m.w, b.v_m.w);
  copy(c.v_m.b, b.v_m.b);
  copy(c.o_x.w, b.o_x.w);
  copy(c.o_x.b, b.o_x.b);
  copy(c.o_m.w, b.o_m.w);
  copy(c.o_m.b, b.o_m.b);
  copy(c.ffn_x.dw.w, b.ffn_x.dw.w);
  copy(c.ffn_x.pw.w, b.ffn_x.pw.w);
  copy(c.ffn_x.pw.b, b.ffn_x.pw.b);
  copy(c.ffn_m.c1.w, b.ffn_m.c1.w);
  copy(c.ffn_m.c1.b, b.ffn_m.c1.b);
  copy(c.ffn_m.c2.w, b.ffn_m.c2.w);
  copy(c.ffn_m.c2.b, b.ffn_m.c2.b);
  return c;
}

// All-pairs boundary-distance oracle for hd95.
double hd95_oracle(const std::vector<std::uint8_t>& p, const std::vector<std::uint8_t>& g,
                   std::size_t H, std::size_t W, int cls, double sy, double sx) {
  auto boundary = [&](const std::vector<std::uint8_t>& m) {
    std::vector<std::pair<long, long>> out;
    for (long y = 0; y < static_cast<long>(H); ++y)
      for (long x = 0; x < static_cast<long>(W); ++x) {
        if (m[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)] != cls) continue;
        bool b = y == 0 || y + 1 == static_cast<long>(H) || x == 0 ||
                 x + 1 == static_cast<long>(W) ||
                 m[static_cast<std::size_t>(y - 1) * W + static_cast<std::size_t>(x)] != cls ||
                 m[static_cast<std::size_t>(y + 1) * W + static_cast<std::size_t>(x)] != cls ||
                 m[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x - 1)] != cls ||
                 m[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x + 1)] != cls;
        if (b) out.push_back({y, x});
      }
    return out;
  };
  auto bp = boundary(p), bg = boundary(g);
  if (bp.empty() || bg.empty()) return std::numeric_limits<double>::infinity();
  std::vector<double> pooled;
  auto directed = [&](const auto& from, const auto& to) {
    for (auto [y1, x1] : from) {
      double best = std::numeric_limits<double>::infinity();
      for (auto [y2, x2] : to) {
        double dy = static_cast<double>(y1 - y2) * sy, dx = static_cast<double>(x1 - x2) * sx;
        best = std::min(best, dy * dy + dx * dx);
      }
      pooled.push_back(std::sqrt(best));
    }
  };
  directed(bp, bg);
  directed(bg, bp);
  std::sort(pooled.begin(), pooled.end());
  double pos = 0.95 * static_cast<double>(pooled.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= pooled.size()) return pooled.back();
  double f = pos - static_cast<double>(lo);
  return pooled[lo] * (1 - f) + pooled[lo + 1] * f;
}

// ------------------------------------------------------------- criteria

// 1: finite-difference checks for every differentiable op, the attention
// block, semantic map init, fusion, both losses, and an end-to-end model.
bool criterion_gradients() {
  double worst = 0.0;
  auto acc = [&](double e) { worst = std::max(worst, e); };

  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(7919u * static_cast<unsigned>(seed) + 13u);

    {  // matmul / transpose
      auto a = T64::randn(Shape{4, 3}, rng);
      auto b = T64::randn(Shape{4, 2}, rng);
      acc(grad_check(
          [&] {
            auto c = matmul(transpose(a), b);
            return sum(mul(c, c));
          },
          {&a, &b}));
    }
    {  // elementwise: add, sub, mul, scale, gelu, mean
      auto x = T64::randn(Shape{3, 5}, rng);
      auto y = T64::randn(Shape{3, 5}, rng);
      acc(grad_check(
          [&] { return mean(gelu(add(mul(x, y), scale(sub(x, y), 0.7)))); }, {&x, &y}));
    }
    {  // softmax_rows, slice/concat cols and rows, reshape, flatten
      auto x = T64::randn(Shape{4, 5}, rng);
      auto y = T64::randn(Shape{4, 5}, rng);
      acc(grad_check(
          [&] {
            auto z = softmax_rows(
                concat_cols(std::vector<T64>{slice_cols(x, 0, 2), slice_cols(x, 2, 5)}));
            auto w = concat_rows(std::vector<T64>{slice_rows(z, 0, 1), slice_rows(z, 1, 4)});
            return sum(mul(reshape(flatten(w), Shape{4, 5}), y));
          },
          {&x, &y}));
    }
    {  // conv2d dense, strided, depthwise
      auto x = T64::randn(Shape{2, 5, 5}, rng);
      auto w = T64::randn(Shape{3, 2, 3, 3}, rng);
      auto b = T64::randn(Shape{3}, rng);
      auto wd = T64::randn(Shape{2, 1, 3, 3}, rng);
      acc(grad_check(
          [&] {
            auto y = conv2d(conv2d(x, wd, T64(), 1, 1, 2), w, b, 2, 1, 1);
            return sum(mul(y, y));
          },
          {&x, &w, &b, &wd}));
    }
    {  // group_norm
      auto x = T64::randn(Shape{4, 3, 3}, rng);
      auto gamma = T64::randn(Shape{4}, rng);
      auto beta = T64::randn(Shape{4}, rng);
      acc(grad_check(
          [&] {
            auto y = group_norm(x, gamma, beta, 2);
            return sum(mul(y, y));
          },
          {&x, &gamma, &beta}));
    }
    {  // spatial ops: upsample2x, pooling, space_to_depth2, concat_channels, seq maps
      auto x1 = T64::randn(Shape{2, 4, 4}, rng);
      auto x2 = T64::randn(Shape{3, 4, 4}, rng);
      acc(grad_check(
          [&] {
            auto z = upsample2x(adaptive_avg_pool(concat_channels(x1, x2), 2, 2));
            auto z2 = seq_to_map(map_to_seq(space_to_depth2(z)), 2, 2);
            return sum(mul(z2, z2));
          },
          {&x1, &x2}));
    }
    {  // both losses through softmax_channels
      auto logits = T64::randn(Shape{3, 3, 3}, rng);
      std::uniform_int_distribution<int> d(0, 2);
      std::vector<std::uint8_t> labels(9);
      for (auto& v : labels) v = static_cast<std::uint8_t>(d(rng));
      acc(grad_check([&] { return ce_loss(softmax_channels(logits), labels); }, {&logits}));
      acc(grad_check([&] { return dice_loss(softmax_channels(logits), labels); }, {&logits}));
    }
    {  // bidirectional attention block
      AttnConfig cfg;
      cfg.d = 4;
      cfg.n_heads = 2;
      cfg.sem_h = 2;
      cfg.sem_w = 2;
      BmhaBlock<double> blk;
      blk.init(cfg, rng);
      auto x = T64::randn(Shape{4, 3, 3}, rng);
      auto m = T64::randn(Shape{4, 2, 2}, rng);
      acc(grad_check(
          [&] {
            auto [x1, m1] = blk(x, m);
            return add(sum(mul(x1, x1)), sum(mul(m1, m1)));
          },
          {&x, &m, &blk.qk_x.pw.w, &blk.v_m.w, &blk.o_x.w, &blk.ffn_x.dw.w}, 4, &rng));
    }
    {  // semantic map initialization
      SemanticMapInit<double> sem;
      sem.init(4, 2, 2, rng);
      auto x = T64::randn(Shape{4, 4, 4}, rng);
      acc(grad_check(
          [&] {
            auto m = sem(x);
            return sum(mul(m, m));
          },
          {&x, &sem.weight_conv.w, &sem.base_conv.w}, 6, &rng));
    }
    {  // multi-scale fusion
      SemanticFusion<double> fusion;
      fusion.init(4, 1, 2, rng);
      auto m0 = T64::randn(Shape{4, 2, 2}, rng);
      auto m1 = T64::randn(Shape{4, 1, 1}, rng);
      acc(grad_check(
          [&] {
            auto outs = fusion({m0, m1});
            return add(sum(mul(outs[0], outs[0])), sum(mul(outs[1], outs[1])));
          },
          {&m0, &m1, &fusion.blocks[0].attn.q.w}, 4, &rng));
    }
    {  // end-to-end micro model, 1 x 16 x 16
      ModelConfig cfg;
      cfg.base_width = 8;
      cfg.widths = {8, 8, 8};
      cfg.blocks = {1, 1, 1};
      cfg.heads = {2, 2, 2};
      cfg.sem_h = 2;
      cfg.sem_w = 2;
      cfg.fuse_blocks = 1;
      cfg.fuse_heads = 2;
      auto model = Model<double>::build(cfg, static_cast<std::uint64_t>(seed));
      auto img = T64::randn(Shape{1, 16, 16}, rng);
      std::uniform_int_distribution<int> d(0, 1);
      std::vector<std::uint8_t> labels(256);
      for (auto& v : labels) v = static_cast<std::uint8_t>(d(rng));
      auto params = model.named_parameters();
      std::vector<std::string> names;
      for (auto& [n, t] : params) names.push_back(n);
      std::vector<Tensor<double>*> probes = {&img};
      for (int j = 0; j < 2; ++j)
        probes.push_back(params[names[rng() % names.size()]]);
      acc(grad_check(
          [&] {
            auto out = model.forward(img);
            return total_loss(softmax_channels(out.logits), labels);
          },
          probes, 2, &rng));
    }
    if (worst >= 1e-4) break;
  }
  std::printf("    worst relative error %.3g\n", worst);
  return worst < 1e-4;
}

// 2: shared-QK transpose reuse equals an independently computed key path.
bool criterion_transpose_identity() {
  std::mt19937_64 rng(157);
  double worst = 0.0;
  for (int it = 0; it < 50; ++it) {
    AttnConfig cfg;
    cfg.d = 8 * (1 + it % 2);
    cfg.n_heads = (it % 3 == 0) ? 1 : 2;
    cfg.sem_h = 1 + it % 3;
    cfg.sem_w = 1 + (it / 3) % 3;
    BmhaBlock<double> blk;
    blk.init(cfg, rng);
    auto indep = make_indep_copy(blk);
    auto x = T64::randn(Shape{cfg.d, 4, 4}, rng);
    auto m = T64::randn(Shape{cfg.d, cfg.sem_h, cfg.sem_w}, rng);
    auto [x1, m1] = blk(x, m);
    auto [x2, m2] = indep(x, m);
    for (std::size_t i = 0; i < x1.size(); ++i) worst = std::max(worst, std::abs(x1[i] - x2[i]));
    for (std::size_t i = 0; i < m1.size(); ++i) worst = std::max(worst, std::abs(m1[i] - m2[i]));
  }
  std::printf("    worst deviation %.3g over 50 configs\n", worst);
  return worst < 1e-6;
}

// 3: dense/efficient/bidirectional attention against naive loop oracles,
// and row-stochastic attention weights.
bool criterion_attention_oracles() {
  std::mt19937_64 rng(131);
  double worst = 0.0;

  // efficient attention with l = n and identity projector vs dense
  {
    DenseMhsa<double> dense;
    dense.init(8, 2, rng);
    EfficientAttention<double> eff;
    eff.init(8, 2, 4, 4, rng);
    eff.q.w.vec() = dense.q.w.vec();
    eff.q.b.vec() = dense.q.b.vec();
    eff.k.w.vec() = dense.k.w.vec();
    eff.k.b.vec() = dense.k.b.vec();
    eff.v.w.vec() = dense.v.w.vec();
    eff.v.b.vec() = dense.v.b.vec();
    eff.o.w.vec() = dense.o.w.vec();
    eff.o.b.vec() = dense.o.b.vec();
    auto x = T64::randn(Shape{8, 4, 4}, rng);
    auto a = eff(x);
    auto b = dense(x);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }

  // degenerate bidirectional block vs naive dense cross-attention
  {
    AttnConfig cfg;
    cfg.d = 8;
    cfg.n_heads = 2;
    cfg.sem_h = 4;
    cfg.sem_w = 4;  // h*w == H*W
    BmhaBlock<double> blk;
    blk.init(cfg, rng);
    auto x = T64::randn(Shape{8, 4, 4}, rng);
    auto m = T64::randn(Shape{8, 4, 4}, rng);
    auto xn = blk.norm_x1(x);
    auto mn = blk.norm_m1(m);
    auto qf = map_to_seq(blk.qk_x(xn));
    auto vf = map_to_seq(blk.v_x(xn));
    auto qs = map_to_seq(blk.qk_m(mn));
    auto vs = map_to_seq(blk.v_m(mn));
    auto x_att = naive_mha(qf, qs, vs, 2);
    auto m_att = naive_mha(qs, qf, vf, 2);
    auto xo = add(x, blk.o_x(seq_to_map(T64(Shape{16, 8}, x_att), 4, 4)));
    auto mo = add(m, blk.o_m(seq_to_map(T64(Shape{16, 8}, m_att), 4, 4)));
    auto xref = add(xo, blk.ffn_x(blk.norm_x2(xo)));
    auto mref = add(mo, blk.ffn_m(blk.norm_m2(mo)));
    auto [x1, m1] = blk(x, m);
    for (std::size_t i = 0; i < x1.size(); ++i) worst = std::max(worst, std::abs(x1[i] - xref[i]));
    for (std::size_t i = 0; i < m1.size(); ++i) worst = std::max(worst, std::abs(m1[i] - mref[i]));
  }

  // attention weights are convex combinations: rows sum to 1
  {
    AttnConfig cfg;
    cfg.d = 8;
    cfg.n_heads = 2;
    cfg.sem_h = 2;
    cfg.sem_w = 2;
    BmhaBlock<double> blk;
    blk.init(cfg, rng);
    auto x = T64::randn(Shape{8, 4, 4}, rng);
    auto m = T64::randn(Shape{8, 2, 2}, rng);
    AttnTrace<double> trace;
    blk(x, m, &trace);
    for (std::size_t i = 0; i < 16; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 4; ++j) s += trace.x_weights[i * 4 + j];
      worst = std::max(worst, std::abs(s - 1.0));
    }
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 16; ++j) s += trace.m_weights[i * 16 + j];
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  std::printf("    worst deviation %.3g\n", worst);
  return worst < 1e-6;
}

// 4: measured MAC growth exponents over >= 6 doublings of n = H*W.
bool criterion_complexity() {
  const std::vector<std::size_t> sides = {8, 12, 16, 24, 32, 48, 64};  // n: 64 .. 4096
  auto bmha = linearity_fit(sweep_macs(BenchVariant::bmha, sides, 8, 3, 4, 2, 2));
  auto conv = linearity_fit(sweep_macs(BenchVariant::conv, sides, 8));
  auto mhsa = linearity_fit(sweep_macs(BenchVariant::mhsa, sides, 8));
  std::printf("    bmha slope %.4f (r2 %.6f), conv slope %.4f, mhsa slope %.4f\n", bmha.slope,
              bmha.r2, conv.slope, mhsa.slope);
  return bmha.slope > 0.95 && bmha.slope < 1.05 && bmha.r2 > 0.999 && conv.slope > 0.95 &&
         conv.slope < 1.05 && mhsa.slope > 1.85 && mhsa.slope < 2.05;
}

// 5: closed-form MAC formulas at the hand-evaluated point H=W=4, d=2, k=3, hw=4.
bool criterion_formula_values() {
  const bool ok = formula_macs(BenchVariant::conv, 4, 4, 2, 3) == 576 &&
                  formula_macs(BenchVariant::mhsa, 4, 4, 2) == 1280 &&
                  formula_macs(BenchVariant::bmha, 4, 4, 2, 3, 1, 4) == 576;
  std::printf("    conv %llu mhsa %llu bmha %llu\n",
              static_cast<unsigned long long>(formula_macs(BenchVariant::conv, 4, 4, 2, 3)),
              static_cast<unsigned long long>(formula_macs(BenchVariant::mhsa, 4, 4, 2)),
              static_cast<unsigned long long>(formula_macs(BenchVariant::bmha, 4, 4, 2, 3, 1, 4)));
  return ok;
}

// 6: dsc / hd95 vs brute-force oracles on 100 random 8x8 pairs, and
// sliding-window inference vs placement enumeration.
bool criterion_metric_oracles() {
  std::mt19937_64 rng(61);
  std::bernoulli_distribution coin(0.3);
  double worst_hd = 0.0;
  bool dsc_exact = true;
  int checked = 0;
  for (int it = 0; checked < 100 && it < 200; ++it) {
    std::vector<std::uint8_t> p(64), g(64);
    for (auto& v : p) v = coin(rng);
    for (auto& v : g) v = coin(rng);
    // dsc against the direct count formula
    double inter = 0, np = 0, ng = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      inter += (p[i] == 1 && g[i] == 1) ? 1 : 0;
      np += p[i] == 1;
      ng += g[i] == 1;
    }
    double dref = (np + ng == 0) ? 1.0 : 2.0 * inter / (np + ng);
    if (dsc(p, g, 1) != dref) dsc_exact = false;
    double sy = 1.0 + (it % 3) * 0.5, sx = 1.0 + (it % 2) * 0.25;
    double got = hd95(p, g, 8, 8, 1, sy, sx);
    double ref = hd95_oracle(p, g, 8, 8, 1, sy, sx);
    if (std::isinf(ref)) {
      if (!std::isinf(got)) return false;
      continue;
    }
    worst_hd = std::max(worst_hd, std::abs(got - ref));
    ++checked;
  }

  // sliding window vs an explicit placement-enumeration oracle
  auto image = Tensor<float>::randn(Shape{1, 14, 10}, rng);
  auto fwd = [&](const Tensor<float>& patch) {
    Tensor<float> logits(Shape{2, patch.dim(1), patch.dim(2)});
    for (std::size_t i = 0; i < patch.dim(1) * patch.dim(2); ++i) {
      logits[i] = patch[i];
      logits[patch.dim(1) * patch.dim(2) + i] = -patch[i];
    }
    return logits;
  };
  auto got = sliding_window_infer(fwd, image, 8, 4);
  const std::size_t H = 14, W = 10;
  std::vector<double> acc(2 * H * W, 0.0), cov(H * W, 0.0);
  for (std::size_t y0 : window_starts(H, 8))
    for (std::size_t x0 : window_starts(W, 4)) {
      Tensor<float> patch(Shape{1, 8, 4});
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 4; ++x)
          patch[y * 4 + x] = image[(y0 + y) * W + x0 + x];
      auto logits = fwd(patch);
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 4; ++x) {
          const double a = logits[y * 4 + x], b = logits[32 + y * 4 + x];
          const double mx = std::max(a, b);
          const double za = std::exp(a - mx), zb = std::exp(b - mx);
          acc[(y0 + y) * W + x0 + x] += za / (za + zb);
          acc[H * W + (y0 + y) * W + x0 + x] += zb / (za + zb);
          cov[(y0 + y) * W + x0 + x] += 1.0;
        }
    }
  double worst_sw = 0.0;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < H * W; ++i)
      worst_sw = std::max(
          worst_sw, std::abs(acc[c * H * W + i] / cov[i] - static_cast<double>(got[c * H * W + i])));
  std::printf("    %d mask pairs, dsc exact %d, worst hd95 diff %.3g, worst window diff %.3g\n",
              checked, dsc_exact ? 1 : 0, worst_hd, worst_sw);
  return checked >= 100 && dsc_exact && worst_hd < 1e-9 && worst_sw < 1e-6;
}

ModelConfig smoke_config() {
  ModelConfig cfg;
  cfg.base_width = 16;
  cfg.widths = {32, 48, 64};
  cfg.blocks = {1, 1, 1};
  cfg.heads = {4, 4, 4};
  cfg.sem_h = 4;
  cfg.sem_w = 4;
  cfg.fuse_blocks = 1;
  cfg.fuse_heads = 4;
  return cfg;
}

std::vector<SegSample> smoke_data(std::uint64_t seed, std::size_t n, std::size_t hw) {
  std::mt19937_64 rng(seed);
  auto samples = synth_task(rng, n, hw, hw, 2);
  for (auto& s : samples) s = normalize_intensity(s);
  return samples;
}

// 7: the tiny model reaches val DSC >= 0.95 on the seeded synthetic task,
// and a repeat run with the same seed reproduces the metrics exactly.
bool criterion_smoke_training() {
  auto all = smoke_data(977, 320, 64);
  std::vector<SegSample> train_set(all.begin(), all.begin() + 256);
  std::vector<SegSample> val_set(all.begin() + 256, all.end());

  TrainConfig tc;
  tc.epochs = 30;
  tc.lr0 = 1e-3;
  tc.seed = 5;
  tc.stop_at_dsc = 0.95;
  tc.val_every = 1;

  auto run = [&] {
    auto model = Model<float>::build(smoke_config(), 5);
    return train(model, train_set, val_set, tc);
  };
  auto r1 = run();
  auto r2 = run();
  bool identical = r1.epochs.size() == r2.epochs.size();
  for (std::size_t i = 0; identical && i < r1.epochs.size(); ++i) {
    identical = r1.epochs[i].loss == r2.epochs[i].loss &&
                r1.epochs[i].main_loss == r2.epochs[i].main_loss &&
                r1.epochs[i].aux_loss == r2.epochs[i].aux_loss &&
                (r1.epochs[i].val_dsc == r2.epochs[i].val_dsc ||
                 (std::isnan(r1.epochs[i].val_dsc) && std::isnan(r2.epochs[i].val_dsc)));
  }
  std::printf("    best val dsc %.4f after %zu epochs, repeat run identical %d\n", r1.best_val_dsc,
              r1.epochs.size(), identical ? 1 : 0);
  return r1.best_val_dsc >= 0.95 && identical && !r1.aborted;
}

// 8: shrinking the semantic map barely hurts the bidirectional variant but
// clearly hurts the linear low-rank baseline. The probe uses the context-cue
// task, where the class of every blob is decodable only from a small corner
// legend: adaptive semantic aggregation isolates the legend at any map size,
// while fixed-grid pooling dilutes it badly at 2x2.
// Fixture from the first oracle run (seeds set below): bmha 4x4 0.9998,
// bmha 2x2 0.9997, linear 4x4 0.9528, linear 2x2 0.7037.
bool criterion_semantic_size_probe() {
  // 64x64 inputs so the 16x-level token map (4x4) still covers a 4x4
  // semantic target for the pooled linear baseline
  std::mt19937_64 rng(1409);
  auto all = synth_context_task(rng, 72, 64, 64);
  for (auto& s : all) s = normalize_intensity(s);
  std::vector<SegSample> train_set(all.begin(), all.begin() + 48);
  std::vector<SegSample> val_set(all.begin() + 48, all.end());

  auto run = [&](AttnVariant variant, std::size_t sem) {
    ModelConfig cfg = smoke_config();
    cfg.num_classes = 3;
    cfg.variant = variant;
    cfg.sem_h = sem;
    cfg.sem_w = sem;
    TrainConfig tc;
    tc.epochs = 20;
    tc.lr0 = 2e-3;
    tc.seed = 5;
    tc.val_every = 2;
    auto model = Model<float>::build(cfg, 5);
    return train(model, train_set, val_set, tc).best_val_dsc;
  };
  const double b4 = run(AttnVariant::bmha, 4);
  const double b2 = run(AttnVariant::bmha, 2);
  const double l4 = run(AttnVariant::linear, 4);
  const double l2 = run(AttnVariant::linear, 2);
  const double bmha_drop = b4 - b2, linear_drop = l4 - l2;
  std::printf("    bmha 4x4 %.4f -> 2x2 %.4f (drop %.4f); linear 4x4 %.4f -> 2x2 %.4f (drop %.4f)\n",
              b4, b2, bmha_drop, l4, l2, linear_drop);
  return bmha_drop < 0.02 && linear_drop > bmha_drop;
}

// 9: checkpoint and tensor-file round trips are bitwise exact; evaluation
// after reload reproduces the metrics bitwise.
bool criterion_persistence() {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "mf_acceptance_persist";
  fs::remove_all(dir);
  fs::create_directories(dir);

  std::mt19937_64 rng(2027);
  auto t = Tensor<float>::randn(Shape{3, 5, 4}, rng);
  write_mft((dir / "t.mft").string(), t);
  auto t2 = read_mft<float>((dir / "t.mft").string());
  bool mft_ok = t.shape() == t2.shape();
  for (std::size_t i = 0; mft_ok && i < t.size(); ++i) mft_ok = t[i] == t2[i];

  ModelConfig cfg;
  cfg.base_width = 8;
  cfg.widths = {8, 8, 8};
  cfg.blocks = {1, 1, 1};
  cfg.heads = {2, 2, 2};
  cfg.sem_h = 2;
  cfg.sem_w = 2;
  cfg.fuse_blocks = 1;
  cfg.fuse_heads = 2;
  auto data = smoke_data(31, 12, 32);
  std::vector<SegSample> train_set(data.begin(), data.begin() + 8);
  std::vector<SegSample> val_set(data.begin() + 8, data.end());
  TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 9;
  auto model = Model<float>::build(cfg, 9);
  train(model, train_set, val_set, tc);
  model.save_checkpoint((dir / "m.ckpt").string());
  auto reloaded = Model<float>::load_checkpoint((dir / "m.ckpt").string());

  bool ckpt_ok = true;
  auto pa = model.named_parameters(), pb = reloaded.named_parameters();
  ckpt_ok = pa.size() == pb.size();
  for (auto& [name, pt] : pa) {
    if (!ckpt_ok) break;
    auto it = pb.find(name);
    ckpt_ok = it != pb.end() && pt->shape() == it->second->shape();
    for (std::size_t i = 0; ckpt_ok && i < pt->size(); ++i)
      ckpt_ok = (*pt)[i] == (*it->second)[i];
  }

  auto e1 = evaluate(model, val_set);
  auto e2 = evaluate(reloaded, val_set);
  bool eval_ok = e1.mean_dsc == e2.mean_dsc && e1.records.size() == e2.records.size();
  for (std::size_t i = 0; eval_ok && i < e1.records.size(); ++i)
    eval_ok = e1.records[i].dsc_value == e2.records[i].dsc_value &&
              e1.records[i].hd95_value == e2.records[i].hd95_value;
  std::printf("    mft bitwise %d, checkpoint bitwise %d, eval bitwise %d\n", mft_ok ? 1 : 0,
              ckpt_ok ? 1 : 0, eval_ok ? 1 : 0);
  return mft_ok && ckpt_ok && eval_ok;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<bool()> fn;
  };
  const std::vector<Criterion> criteria = {
      {"gradient suite (finite differences, 20 seeds, f64)", criterion_gradients},
      {"transpose identity for shared-QK bidirectional attention", criterion_transpose_identity},
      {"attention oracle equivalences and row-stochastic weights", criterion_attention_oracles},
      {"complexity slopes over >= 6 doublings of n", criterion_complexity},
      {"closed-form MAC formula hand values", criterion_formula_values},
      {"metric and sliding-window oracles", criterion_metric_oracles},
      {"smoke training to val DSC >= 0.95 with bitwise repeatability", criterion_smoke_training},
      {"semantic map size monotonicity probe", criterion_semantic_size_probe},
      {"persistence round trips are bitwise exact", criterion_persistence},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    std::string error;
    try {
      ok = criteria[i].fn();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %zu: %s - %s (%.1fs)%s%s\n", i + 1, criteria[i].name,
                ok ? "PASS" : "FAIL", secs, error.empty() ? "" : " error: ", error.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (failures) std::printf("%d criterion(s) FAILED\n", failures);
  return failures == 0 ? 0 : 1;
}
