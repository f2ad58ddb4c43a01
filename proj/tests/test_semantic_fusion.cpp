#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "medformer/fusion.hpp"
#include "medformer/gradcheck.hpp"
#include "medformer/semantic_map.hpp"

using namespace mf;
using T64 = Tensor<double>;

TEST_CASE("init_semantic_map: zero weight conv gives the spatial mean of the base map") {
  std::mt19937_64 rng(211);
  SemanticMapInit<double> init;
  init.init(4, 2, 2, rng);
  init.weight_conv.w.vec().assign(init.weight_conv.w.size(), 0.0);
  init.weight_conv.b.vec().assign(init.weight_conv.b.size(), 0.0);
  auto x = T64::randn(Shape{4, 6, 6}, rng);
  auto m = init(x);
  auto base = init.base_conv(x);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0;
    for (std::size_t i = 0; i < 36; ++i) mean += base[c * 36 + i];
    mean /= 36.0;
    for (std::size_t t = 0; t < 4; ++t) CHECK(m[c * 4 + t] == doctest::Approx(mean).epsilon(1e-10));
  }
}

TEST_CASE("init_semantic_map: saturated softmax picks the argmax base token") {
  std::mt19937_64 rng(223);
  SemanticMapInit<double> init;
  init.init(4, 2, 2, rng);
  auto x = T64::randn(Shape{4, 6, 6}, rng);
  auto logits = init.weight_conv(x).detached();
  // scale logits far past saturation
  for (auto& v : init.weight_conv.w.vec()) v *= 1000.0;
  for (auto& v : init.weight_conv.b.vec()) v *= 1000.0;
  auto m = init(x);
  auto base = init.base_conv(x);
  for (std::size_t t = 0; t < 4; ++t) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 36; ++i)
      if (logits[t * 36 + i] > logits[t * 36 + best]) best = i;
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(std::abs(m[c * 4 + t] - base[c * 36 + best]) < 1e-4);
  }
}

TEST_CASE("init_semantic_map matches explicit loop oracle on 4x6x6, h=w=2") {
  std::mt19937_64 rng(227);
  SemanticMapInit<double> init;
  init.init(4, 2, 2, rng);
  auto x = T64::randn(Shape{4, 6, 6}, rng);
  auto m = init(x);

  auto wmap = init.weight_conv(x);  // 4 x 6 x 6 (l = 4 channels)
  auto base = init.base_conv(x);    // 4 x 6 x 6
  for (std::size_t t = 0; t < 4; ++t) {
    double mx = -1e300;
    for (std::size_t i = 0; i < 36; ++i) mx = std::max(mx, wmap[t * 36 + i]);
    double z = 0;
    std::vector<double> w(36);
    for (std::size_t i = 0; i < 36; ++i) {
      w[i] = std::exp(wmap[t * 36 + i] - mx);
      z += w[i];
    }
    for (std::size_t c = 0; c < 4; ++c) {
      double acc = 0;
      for (std::size_t i = 0; i < 36; ++i) acc += w[i] / z * base[c * 36 + i];
      CHECK(std::abs(m[c * 4 + t] - acc) < 1e-6);
    }
  }
}

TEST_CASE("init_semantic_map output lies in the convex hull of base tokens") {
  std::mt19937_64 rng(229);
  for (int it = 0; it < 10; ++it) {
    SemanticMapInit<double> init;
    init.init(6, 3, 2, rng);
    auto x = T64::randn(Shape{6, 8, 8}, rng);
    auto m = init(x);
    CHECK(m.shape() == Shape{6, 3, 2});
    auto base = init.base_conv(x);
    for (std::size_t c = 0; c < 6; ++c) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t i = 0; i < 64; ++i) {
        lo = std::min(lo, base[c * 64 + i]);
        hi = std::max(hi, base[c * 64 + i]);
      }
      for (std::size_t t = 0; t < 6; ++t) {
        CHECK(m[c * 6 + t] >= lo - 1e-6);
        CHECK(m[c * 6 + t] <= hi + 1e-6);
      }
    }
  }
}

TEST_CASE("init_semantic_map gradient check") {
  std::mt19937_64 rng(233);
  SemanticMapInit<double> init;
  init.init(4, 2, 2, rng);
  auto x = T64::randn(Shape{4, 5, 5}, rng);
  double err = grad_check(
      [&] {
        auto m = init(x);
        return sum(mul(m, m));
      },
      {&x, &init.weight_conv.w, &init.base_conv.w});
  CHECK(err < 1e-4);
}

TEST_CASE("token_cosine_similarity") {
  // identical tokens -> all ones
  T64 same(Shape{3, 2, 1});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 2; ++t) same[c * 2 + t] = static_cast<double>(c + 1);
  auto s = token_cosine_similarity(same);
  for (std::size_t i = 0; i < 4; ++i) CHECK(s[i] == doctest::Approx(1.0));

  // orthogonal pair -> off-diagonal 0
  T64 ortho(Shape{2, 2, 1}, {1.0, 0.0, 0.0, 1.0});
  auto o = token_cosine_similarity(ortho);
  CHECK(o[0] == doctest::Approx(1.0));
  CHECK(o[1] == doctest::Approx(0.0));

  // random map vs definition-level oracle
  std::mt19937_64 rng(239);
  auto m = T64::randn(Shape{5, 2, 2}, rng);
  auto got = token_cosine_similarity(m);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t c = 0; c < 5; ++c) {
        dot += m[c * 4 + a] * m[c * 4 + b];
        na += m[c * 4 + a] * m[c * 4 + a];
        nb += m[c * 4 + b] * m[c * 4 + b];
      }
      CHECK(std::abs(got[a * 4 + b] - std::abs(dot / std::sqrt(na * nb))) < 1e-6);
    }

  // zero-norm token error names the index
  T64 degen(Shape{2, 2, 1}, {1.0, 0.0, 1.0, 0.0});
  CHECK_THROWS_WITH_AS(token_cosine_similarity(degen), doctest::Contains("index 1"), ValueError);
}

static SemanticFusion<double> make_fusion(std::size_t d, int blocks, std::mt19937_64& rng) {
  SemanticFusion<double> f;
  f.init(d, blocks, 2, rng);
  return f;
}

TEST_CASE("fusion: zero-initialized block weights act as identity") {
  std::mt19937_64 rng(241);
  auto f = make_fusion(8, 2, rng);
  for (auto& b : f.blocks) {
    b.attn.o.w.vec().assign(b.attn.o.w.size(), 0.0);
    b.attn.o.b.vec().assign(b.attn.o.b.size(), 0.0);
    b.ffn.c2.w.vec().assign(b.ffn.c2.w.size(), 0.0);
    b.ffn.c2.b.vec().assign(b.ffn.c2.b.size(), 0.0);
  }
  auto m = T64::randn(Shape{8, 4, 4}, rng);
  auto out = f({m});
  REQUIRE(out.size() == 1);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(out[0][i] == doctest::Approx(m[i]).epsilon(1e-12));
}

TEST_CASE("fusion preserves per-scale shapes and rejects channel mismatch") {
  std::mt19937_64 rng(251);
  auto f = make_fusion(8, 2, rng);
  auto m1 = T64::randn(Shape{8, 4, 4}, rng);
  auto m2 = T64::randn(Shape{8, 4, 4}, rng);
  auto m3 = T64::randn(Shape{8, 4, 4}, rng);
  auto out = f({m1, m2, m3});
  REQUIRE(out.size() == 3);
  for (const auto& o : out) CHECK(o.shape() == Shape{8, 4, 4});

  auto bad = T64::randn(Shape{4, 4, 4}, rng);
  CHECK_THROWS_WITH_AS(f({m1, bad}), doctest::Contains("scale 1"), ShapeError);
}

TEST_CASE("fusion is permutation equivariant over its token axis") {
  std::mt19937_64 rng(257);
  auto f = make_fusion(8, 2, rng);
  auto m = T64::randn(Shape{8, 2, 4}, rng);
  auto base = f({m})[0];

  // permute spatial token order, fuse, inverse-permute
  std::vector<std::size_t> perm = {5, 2, 7, 0, 3, 6, 1, 4};
  T64 mp(m.shape());
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t t = 0; t < 8; ++t) mp[c * 8 + t] = m[c * 8 + perm[t]];
  auto fp = f({mp})[0];
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t t = 0; t < 8; ++t)
      CHECK(std::abs(fp[c * 8 + t] - base[c * 8 + perm[t]]) < 1e-6);

  // swapping scales swaps outputs
  auto a = T64::randn(Shape{8, 2, 2}, rng);
  auto b = T64::randn(Shape{8, 2, 2}, rng);
  auto ab = f({a, b});
  auto ba = f({b, a});
  for (std::size_t i = 0; i < ab[0].size(); ++i) {
    CHECK(std::abs(ab[0][i] - ba[1][i]) < 1e-6);
    CHECK(std::abs(ab[1][i] - ba[0][i]) < 1e-6);
  }
}

TEST_CASE("fusion propagates information across scales") {
  std::mt19937_64 rng(263);
  auto f = make_fusion(8, 2, rng);
  auto a = T64::randn(Shape{8, 2, 2}, rng);
  auto b = T64::randn(Shape{8, 2, 2}, rng);
  auto base = f({a, b});
  T64 ap = a.detached();
  ap[0] += 0.5;  // perturb one token of scale 0
  auto pert = f({ap, b});
  double diff = 0;
  for (std::size_t i = 0; i < base[1].size(); ++i)
    diff = std::max(diff, std::abs(base[1][i] - pert[1][i]));
  CHECK(diff > 0.0);
}

TEST_CASE("fusion gradient check") {
  std::mt19937_64 rng(269);
  auto f = make_fusion(8, 1, rng);
  auto a = T64::randn(Shape{8, 2, 2}, rng);
  auto b = T64::randn(Shape{8, 2, 2}, rng);
  double err = grad_check(
      [&] {
        auto out = f({a, b});
        return add(sum(mul(out[0], out[0])), sum(mul(out[1], out[1])));
      },
      {&a, &b, &f.blocks[0].attn.q.w, &f.blocks[0].ffn.c1.w});
  CHECK(err < 1e-4);
}
