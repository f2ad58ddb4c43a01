#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "medformer/modules.hpp"
#include "medformer/nn.hpp"
#include "medformer/tensor.hpp"

namespace mf {

struct AttnConfig {
  std::size_t d = 32;
  int n_heads = 4;
  std::size_t k = 3;       // projection kernel size
  std::size_t sem_h = 4;   // semantic map height
  std::size_t sem_w = 4;   // semantic map width
  bool share_qk = true;

  std::size_t head_dim() const { return d / static_cast<std::size_t>(n_heads); }
};

// Optional capture of the attention weights of the most recent forward.
// Weights are head-averaged and detached from the tape.
template <class T>
struct AttnTrace {
  Tensor<T> x_weights;  // n x l, rows sum to 1
  Tensor<T> m_weights;  // l x n, rows sum to 1
};

namespace detail {

template <class T>
void head_avg_acc(Tensor<T>& acc, const Tensor<T>& w, int heads) {
  if (acc.size() == 0) acc = Tensor<T>::zeros(w.shape());
  const T inv = T(1) / static_cast<T>(heads);
  for (std::size_t i = 0; i < w.size(); ++i) acc[i] += w[i] * inv;
}

}  // namespace detail

// Multi-head scaled dot-product attention over token sequences.
// q: n x d, k: m x d, v: m x d. Channels are split contiguously into heads;
// logits are scaled by 1/sqrt(d_head).
template <class T>
Tensor<T> mha_seq(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int heads,
                  Tensor<T>* avg_weights = nullptr) {
  check(q.dim(1) == k.dim(1) && k.shape() == v.shape(),
        "mha_seq: shape mismatch q" + shape_str(q.shape()) + " k" + shape_str(k.shape()) +
            " v" + shape_str(v.shape()));
  const std::size_t d = q.dim(1);
  check(d % static_cast<std::size_t>(heads) == 0, "mha_seq: d not divisible by heads");
  const std::size_t dh = d / heads;
  const T scl = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  if (avg_weights) *avg_weights = Tensor<T>();
  std::vector<Tensor<T>> outs;
  for (int h = 0; h < heads; ++h) {
    auto qh = slice_cols(q, h * dh, (h + 1) * dh);
    auto kh = slice_cols(k, h * dh, (h + 1) * dh);
    auto vh = slice_cols(v, h * dh, (h + 1) * dh);
    auto a = softmax_rows(scale(matmul(qh, transpose(kh)), scl));
    if (avg_weights) detail::head_avg_acc(*avg_weights, a.detached(), heads);
    outs.push_back(matmul(a, vh));
  }
  return concat_cols(outs);
}

// Dense multi-head self-attention over a token map, with pointwise (linear)
// query/key/value/output projections.
template <class T>
struct DenseMhsa {
  Conv2dLayer<T> q, k, v, o;
  int heads = 4;

  void init(std::size_t d, int heads_, std::mt19937_64& rng) {
    heads = heads_;
    q.init(d, d, 1, 1, 0, 1, rng);
    k.init(d, d, 1, 1, 0, 1, rng);
    v.init(d, d, 1, 1, 0, 1, rng);
    o.init(d, d, 1, 1, 0, 1, rng);
  }

  void reg(ParamRegistry<T>& r, const std::string& p) {
    q.reg(r, p + ".q");
    k.reg(r, p + ".k");
    v.reg(r, p + ".v");
    o.reg(r, p + ".o");
  }

  Tensor<T> operator()(const Tensor<T>& x, Tensor<T>* avg_weights = nullptr) const {
    const std::size_t H = x.dim(1), W = x.dim(2);
    auto qs = map_to_seq(q(x));
    auto ks = map_to_seq(k(x));
    auto vs = map_to_seq(v(x));
    auto out = mha_seq(qs, ks, vs, heads, avg_weights);
    return o(seq_to_map(out, H, W));
  }
};

// Low-rank efficient attention: key/value maps are reduced to l = h*w tokens
// by a linear projector (adaptive average pooling) before attention, so the
// attention matrix is n x l.
template <class T>
struct EfficientAttention {
  Conv2dLayer<T> q, k, v, o;
  int heads = 4;
  std::size_t sem_h = 4, sem_w = 4;

  void init(std::size_t d, int heads_, std::size_t h, std::size_t w, std::mt19937_64& rng) {
    heads = heads_;
    sem_h = h;
    sem_w = w;
    q.init(d, d, 1, 1, 0, 1, rng);
    k.init(d, d, 1, 1, 0, 1, rng);
    v.init(d, d, 1, 1, 0, 1, rng);
    o.init(d, d, 1, 1, 0, 1, rng);
  }

  void reg(ParamRegistry<T>& r, const std::string& p) {
    q.reg(r, p + ".q");
    k.reg(r, p + ".k");
    v.reg(r, p + ".v");
    o.reg(r, p + ".o");
  }

  Tensor<T> operator()(const Tensor<T>& x, Tensor<T>* avg_weights = nullptr) const {
    const std::size_t H = x.dim(1), W = x.dim(2);
    auto qs = map_to_seq(q(x));
    auto ks = map_to_seq(adaptive_avg_pool(k(x), sem_h, sem_w));
    auto vs = map_to_seq(adaptive_avg_pool(v(x), sem_h, sem_w));
    auto out = mha_seq(qs, ks, vs, heads, avg_weights);
    return o(seq_to_map(out, H, W));
  }
};

// MBConv-style convolutional FFN: depthwise k x k -> gelu -> pointwise.
// The caller adds the residual.
template <class T>
struct ConvFFN {
  Conv2dLayer<T> dw, pw;

  void init(std::size_t d, std::size_t k, std::mt19937_64& rng) {
    dw.init(d, d, k, 1, static_cast<int>(k / 2), static_cast<int>(d), rng, false);
    pw.init(d, d, 1, 1, 0, 1, rng);
  }

  void reg(ParamRegistry<T>& r, const std::string& p) {
    dw.reg(r, p + ".dw");
    pw.reg(r, p + ".pw");
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return pw(gelu(dw(x))); }
};

// Position-wise FFN built from 1x1 convolutions only, used on the semantic
// map stream (padding in a 3x3 depthwise conv would pollute the few tokens).
template <class T>
struct PointwiseFFN {
  Conv2dLayer<T> c1, c2;

  void init(std::size_t d, std::mt19937_64& rng) {
    c1.init(d, d, 1, 1, 0, 1, rng);
    c2.init(d, d, 1, 1, 0, 1, rng);
  }

  void reg(ParamRegistry<T>& r, const std::string& p) {
    c1.reg(r, p + ".c1");
    c2.reg(r, p + ".c2");
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return c2(gelu(c1(x))); }
};

// ---------------------------------------------------------------------------
// B-MHA block. Two streams cross-attend: the full token map X (d x H x W) and
// the semantic map M (d x h x w). With shared per-stream query/key weights the
// M-stream logits are the transpose of the X-stream logits, so the dot
// product is computed once and reused before softmax.
//
// Layout per stream: norm -> attention -> residual -> norm -> ffn -> residual.
// X is projected with depthwise separable convs, M with 1x1 convs only.
// ---------------------------------------------------------------------------

template <class T>
struct BmhaBlock {
  AttnConfig cfg;
  GroupNormLayer<T> norm_x1, norm_x2, norm_m1, norm_m2;
  SepConvProj<T> qk_x, v_x;
  SepConvProj<T> k_x;  // only when share_qk is off
  Conv2dLayer<T> qk_m, v_m, k_m, o_x, o_m;
  ConvFFN<T> ffn_x;
  PointwiseFFN<T> ffn_m;

  void init(const AttnConfig& c, std::mt19937_64& rng) {
    cfg = c;
    norm_x1.init(c.d);
    norm_x2.init(c.d);
    norm_m1.init(c.d);
    norm_m2.init(c.d);
    qk_x.init(c.d, c.k, rng);
    v_x.init(c.d, c.k, rng);
    if (!c.share_qk) k_x.init(c.d, c.k, rng);
    qk_m.init(c.d, c.d, 1, 1, 0, 1, rng);
    v_m.init(c.d, c.d, 1, 1, 0, 1, rng);
    if (!c.share_qk) k_m.init(c.d, c.d, 1, 1, 0, 1, rng);
    o_x.init(c.d, c.d, 1, 1, 0, 1, rng);
    o_m.init(c.d, c.d, 1, 1, 0, 1, rng);
    ffn_x.init(c.d, c.k, rng);
    ffn_m.init(c.d, rng);
  }

  void reg(ParamRegistry<T>& r, const std::string& p) {
    norm_x1.reg(r, p + ".norm_x1");
    norm_x2.reg(r, p + ".norm_x2");
    norm_m1.reg(r, p + ".norm_m1");
    norm_m2.reg(r, p + ".norm_m2");
    qk_x.reg(r, p + ".qk_x");
    v_x.reg(r, p + ".v_x");
    if (!cfg.share_qk) k_x.reg(r, p + ".k_x");
    qk_m.reg(r, p + ".qk_m");
    v_m.reg(r, p + ".v_m");
    if (!cfg.share_qk) k_m.reg(r, p + ".k_m");
    o_x.reg(r, p + ".o_x");
    o_m.reg(r, p + ".o_m");
    ffn_x.reg(r, p + ".ffn_x");
    ffn_m.reg(r, p + ".ffn_m");
  }

  std::pair<Tensor<T>, Tensor<T>> operator()(const Tensor<T>& x, const Tensor<T>& m,
                                             AttnTrace<T>* trace = nullptr) const {
    check(m.rank() == 3 && m.dim(1) == cfg.sem_h && m.dim(2) == cfg.sem_w,
          "bmha: semantic map " + shape_str(m.shape()) + " does not match configured " +
              std::to_string(cfg.sem_h) + "x" + std::to_string(cfg.sem_w));
    const std::size_t H = x.dim(1), W = x.dim(2);
    const std::size_t h = m.dim(1), w = m.dim(2);
    const std::size_t dh = cfg.head_dim();
    const T scl = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    auto xn = norm_x1(x);
    auto mn = norm_m1(m);
    auto q_full = map_to_seq(qk_x(xn));                               // n x d
    auto k_full = cfg.share_qk ? q_full : map_to_seq(k_x(xn));        // n x d
    auto v_full = map_to_seq(v_x(xn));                                // n x d
    auto q_sem = map_to_seq(qk_m(mn));                                // l x d
    auto k_sem = cfg.share_qk ? q_sem : map_to_seq(k_m(mn));          // l x d
    auto v_sem = map_to_seq(v_m(mn));                                 // l x d

    if (trace) {
      trace->x_weights = Tensor<T>();
      trace->m_weights = Tensor<T>();
    }
    std::vector<Tensor<T>> x_heads, m_heads;
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
      auto qf = slice_cols(q_full, hd * dh, (hd + 1) * dh);
      auto vf = slice_cols(v_full, hd * dh, (hd + 1) * dh);
      auto qs = slice_cols(q_sem, hd * dh, (hd + 1) * dh);
      auto vs = slice_cols(v_sem, hd * dh, (hd + 1) * dh);
      // X-stream logits: Q Kbar^T, n x l. Computed once; the M-stream reuses
      // the transpose before softmax.
      auto ks = cfg.share_qk ? qs : slice_cols(k_sem, hd * dh, (hd + 1) * dh);
      auto logits = scale(matmul(qf, transpose(ks)), scl);
      auto ax = softmax_rows(logits);
      Tensor<T> am;
      if (cfg.share_qk) {
        am = softmax_rows(transpose(logits));
      } else {
        auto kf = slice_cols(k_full, hd * dh, (hd + 1) * dh);
        am = softmax_rows(scale(matmul(qs, transpose(kf)), scl));
      }
      if (trace) {
        detail::head_avg_acc(trace->x_weights, ax.detached(), cfg.n_heads);
        detail::head_avg_acc(trace->m_weights, am.detached(), cfg.n_heads);
      }
      x_heads.push_back(matmul(ax, vs));
      m_heads.push_back(matmul(am, vf));
    }
    auto x_att = o_x(seq_to_map(concat_cols(x_heads), H, W));
    auto m_att = o_m(seq_to_map(concat_cols(m_heads), h, w));
    auto x1 = add(x, x_att);
    auto m1 = add(m, m_att);
    auto x2 = add(x1, ffn_x(norm_x2(x1)));
    auto m2 = add(m1, ffn_m(norm_m2(m1)));
    return {x2, m2};
  }
};

// One-directional variant of the B-MHA block: X attends to a fixed semantic
// map M, which is not updated. Used as the last block of a decoder level,
// where a refined M would have no consumer and its update branch would be
// unreachable by gradients.
template <class T>
struct BmhaCrossBlock {
  AttnConfig cfg;
  GroupNormLayer<T> norm_x1, norm_x2, norm_m;
  SepConvProj<T> qk_x;
  Conv2dLayer<T> k_m, v_m, o_x;
  ConvFFN<T> ffn_x;

  void init(const AttnConfig& c, std::mt19937_64& rng) {
    cfg = c;
    norm_x1.init(c.d);
    norm_x2.init(c.d);
    norm_m.init(c.d);
    qk_x.init(c.d, c.k, rng);
    k_m.init(c.d, c.d, 1, 1, 0, 1, rng);
    v_m.init(c.d, c.d, 1, 1, 0, 1, rng);
    o_x.init(c.d, c.d, 1, 1, 0, 1, rng);
    ffn_x.init(c.d, c.k, rng);
  }

  void reg(ParamRegistry<T>& r, const std::string& p) {
    norm_x1.reg(r, p + ".norm_x1");
    norm_x2.reg(r, p + ".norm_x2");
    norm_m.reg(r, p + ".norm_m");
    qk_x.reg(r, p + ".qk_x");
    k_m.reg(r, p + ".k_m");
    v_m.reg(r, p + ".v_m");
    o_x.reg(r, p + ".o_x");
    ffn_x.reg(r, p + ".ffn_x");
  }

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& m,
                       AttnTrace<T>* trace = nullptr) const {
    const std::size_t H = x.dim(1), W = x.dim(2);
    auto xn = norm_x1(x);
    auto mn = norm_m(m);
    auto q = map_to_seq(qk_x(xn));
    auto k = map_to_seq(k_m(mn));
    auto v = map_to_seq(v_m(mn));
    Tensor<T> avg;
    auto att = mha_seq(q, k, v, cfg.n_heads, trace ? &avg : nullptr);
    if (trace) {
      trace->x_weights = avg;
      trace->m_weights = Tensor<T>();
    }
    auto x1 = add(x, o_x(seq_to_map(att, H, W)));
    return add(x1, ffn_x(norm_x2(x1)));
  }
};

// Transformer block for the linear low-rank baseline model: pre-norm
// efficient attention plus convolutional FFN.
template <class T>
struct EfficientAttnBlock {
  AttnConfig cfg;
  GroupNormLayer<T> norm1, norm2;
  EfficientAttention<T> attn;
  ConvFFN<T> ffn;

  void init(const AttnConfig& c, std::mt19937_64& rng) {
    cfg = c;
    norm1.init(c.d);
    norm2.init(c.d);
    attn.init(c.d, c.n_heads, c.sem_h, c.sem_w, rng);
    ffn.init(c.d, c.k, rng);
  }

  void reg(ParamRegistry<T>& r, const std::string& p) {
    norm1.reg(r, p + ".norm1");
    norm2.reg(r, p + ".norm2");
    attn.reg(r, p + ".attn");
    ffn.reg(r, p + ".ffn");
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto x1 = add(x, attn(norm1(x)));
    return add(x1, ffn(norm2(x1)));
  }
};

// Non-overlapping-window dense attention, forward-only; exists for MAC
// accounting against the windowed-attention complexity row.
template <class T>
Tensor<T> window_mhsa_forward(const Tensor<T>& x, const DenseMhsa<T>& proj, std::size_t window) {
  const std::size_t d = x.dim(0), H = x.dim(1), W = x.dim(2);
  check(window >= 1 && H % window == 0 && W % window == 0,
        "window_mhsa: extents " + shape_str(x.shape()) + " not divisible by window " +
            std::to_string(window));
  auto qm = proj.q(x);
  auto km = proj.k(x);
  auto vm = proj.v(x);
  Tensor<T> out(x.shape());
  const std::size_t wy = H / window, wx = W / window;
  for (std::size_t by = 0; by < wy; ++by)
    for (std::size_t bx = 0; bx < wx; ++bx) {
      // gather window tokens into sequences
      const std::size_t n = window * window;
      Tensor<T> qs(Shape{n, d}), ks(Shape{n, d}), vs(Shape{n, d});
      for (std::size_t c = 0; c < d; ++c)
        for (std::size_t yy = 0; yy < window; ++yy)
          for (std::size_t xx = 0; xx < window; ++xx) {
            std::size_t src = (c * H + by * window + yy) * W + bx * window + xx;
            std::size_t tok = yy * window + xx;
            qs[tok * d + c] = qm[src];
            ks[tok * d + c] = km[src];
            vs[tok * d + c] = vm[src];
          }
      auto res = mha_seq(qs, ks, vs, proj.heads);
      for (std::size_t c = 0; c < d; ++c)
        for (std::size_t yy = 0; yy < window; ++yy)
          for (std::size_t xx = 0; xx < window; ++xx)
            out[(c * H + by * window + yy) * W + bx * window + xx] =
                res[(yy * window + xx) * d + c];
    }
  return proj.o(out);
}

}  // namespace mf
