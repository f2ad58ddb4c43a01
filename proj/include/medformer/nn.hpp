#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "medformer/tensor.hpp"

namespace mf {

// Probe switch: when set, every conv2d pads circularly instead of with
// zeros. Used by the shift-equivariance probe; never during training.
inline bool& circular_padding_mode() {
  static bool on = false;
  return on;
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation on channels-first maps.
// x: [c_in x H x W], w: [c_out x c_in/groups x k x k], b: [c_out] (optional).
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride = 1, int pad = 0, int groups = 1) {
  check(x.rank() == 3, "conv2d: input must be CxHxW, got " + shape_str(x.shape()));
  check(w.rank() == 4, "conv2d: weight must be OxIxKxK, got " + shape_str(w.shape()));
  const std::size_t ci = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t co = w.dim(0), cig = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  check(groups >= 1 && ci % groups == 0 && co % groups == 0,
        "conv2d: channels not divisible by groups");
  check(cig == ci / static_cast<std::size_t>(groups),
        "conv2d: weight input channels " + std::to_string(cig) + " != " +
            std::to_string(ci / groups) + " (groups=" + std::to_string(groups) + ")");
  check(b.size() == 0 || (b.rank() == 1 && b.dim(0) == co), "conv2d: bad bias shape");
  const long Hp = static_cast<long>(H) + 2L * pad - static_cast<long>(kh);
  const long Wp = static_cast<long>(W) + 2L * pad - static_cast<long>(kw);
  check(Hp >= 0 && Wp >= 0 && Hp % stride == 0 && Wp % stride == 0,
        "conv2d: non-integral output extent for input " + shape_str(x.shape()) +
            " kernel " + shape_str(w.shape()) + " stride " + std::to_string(stride) +
            " pad " + std::to_string(pad));
  const std::size_t Ho = static_cast<std::size_t>(Hp / stride) + 1;
  const std::size_t Wo = static_cast<std::size_t>(Wp / stride) + 1;

  Tensor<T> out(Shape{co, Ho, Wo});
  const bool circ = circular_padding_mode();
  auto wrap = [](long i, long n) { return static_cast<std::size_t>(((i % n) + n) % n); };
  const std::size_t cog = co / groups;
  const T* px = x.data();
  const T* pw = w.data();
  T* po = out.data();
  for (std::size_t o = 0; o < co; ++o) {
    const std::size_t g = o / cog;
    T* omap = po + o * Ho * Wo;
    if (b.size()) {
      const T bv = b[o];
      for (std::size_t i = 0; i < Ho * Wo; ++i) omap[i] = bv;
    }
    for (std::size_t icg = 0; icg < cig; ++icg) {
      const std::size_t ic = g * cig + icg;
      const T* xmap = px + ic * H * W;
      const T* wk = pw + ((o * cig + icg) * kh) * kw;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const T wv = wk[ky * kw + kx];
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
            if (iy < 0 || iy >= static_cast<long>(H)) {
              if (!circ) continue;
              iy = static_cast<long>(wrap(iy, static_cast<long>(H)));
            }
            const T* xrow = xmap + static_cast<std::size_t>(iy) * W;
            T* orow = omap + oy * Wo;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
              if (ix < 0 || ix >= static_cast<long>(W)) {
                if (!circ) continue;
                ix = static_cast<long>(wrap(ix, static_cast<long>(W)));
              }
              orow[ox] += wv * xrow[ix];
            }
          }
        }
      }
    }
  }
  mac_counter() += static_cast<std::uint64_t>(co) * Ho * Wo * cig * kh * kw;

  detail::attach(out, {x, w, b},
                 [x = x.node(), w = w.node(), b = b.node(), stride, pad, groups, Ho, Wo,
                  circ](Node<T>& o) {
    auto wrap = [](long i, long n) { return static_cast<std::size_t>(((i % n) + n) % n); };
    const std::size_t ci = x->shape[0], H = x->shape[1], W = x->shape[2];
    const std::size_t co = w->shape[0], cig = w->shape[1], kh = w->shape[2], kw = w->shape[3];
    const std::size_t cog = co / groups;
    if (b->data.size() && b->requires_grad) {
      b->ensure_grad();
      for (std::size_t oc = 0; oc < co; ++oc) {
        T s = 0;
        const T* g = o.grad.data() + oc * Ho * Wo;
        for (std::size_t i = 0; i < Ho * Wo; ++i) s += g[i];
        b->grad[oc] += s;
      }
    }
    const bool nx = x->requires_grad, nw = w->requires_grad;
    if (nx) x->ensure_grad();
    if (nw) w->ensure_grad();
    if (!nx && !nw) return;
    for (std::size_t oc = 0; oc < co; ++oc) {
      const std::size_t g = oc / cog;
      const T* gout = o.grad.data() + oc * Ho * Wo;
      for (std::size_t icg = 0; icg < cig; ++icg) {
        const std::size_t ic = g * cig + icg;
        const T* xmap = x->data.data() + ic * H * W;
        T* dxmap = nx ? x->grad.data() + ic * H * W : nullptr;
        const std::size_t wbase = (oc * cig + icg) * kh * kw;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const T wv = w->data[wbase + ky * kw + kx];
            T dw = 0;
            for (std::size_t oy = 0; oy < Ho; ++oy) {
              long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
              if (iy < 0 || iy >= static_cast<long>(H)) {
                if (!circ) continue;
                iy = static_cast<long>(wrap(iy, static_cast<long>(H)));
              }
              const T* grow = gout + oy * Wo;
              const T* xrow = xmap + static_cast<std::size_t>(iy) * W;
              T* dxrow = nx ? dxmap + static_cast<std::size_t>(iy) * W : nullptr;
              for (std::size_t ox = 0; ox < Wo; ++ox) {
                long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
                if (ix < 0 || ix >= static_cast<long>(W)) {
                  if (!circ) continue;
                  ix = static_cast<long>(wrap(ix, static_cast<long>(W)));
                }
                const T gv = grow[ox];
                if (nw) dw += gv * xrow[ix];
                if (nx) dxrow[ix] += gv * wv;
              }
            }
            if (nw) w->grad[wbase + ky * kw + kx] += dw;
          }
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Per-sample group normalization over a channels-first map, followed by a
// per-channel affine transform. groups must divide the channel count.
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> group_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     int groups, T eps = T(1e-5)) {
  check(x.rank() >= 1, "group_norm: empty tensor");
  const std::size_t d = x.dim(0);
  const std::size_t S = x.size() / d;
  check(gamma.size() == d && beta.size() == d, "group_norm: affine params must have length d");
  check(groups >= 1 && d % static_cast<std::size_t>(groups) == 0,
        "group_norm: groups must divide channel count");
  const std::size_t gs = d / groups;
  const std::size_t gn = gs * S;  // elements per group

  Tensor<T> out(x.shape());
  std::vector<T> mu(groups), inv_sigma(groups);
  for (int g = 0; g < groups; ++g) {
    const T* p = x.data() + static_cast<std::size_t>(g) * gn;
    T m = 0;
    for (std::size_t i = 0; i < gn; ++i) m += p[i];
    m /= static_cast<T>(gn);
    T v = 0;
    for (std::size_t i = 0; i < gn; ++i) {
      T dlt = p[i] - m;
      v += dlt * dlt;
    }
    v /= static_cast<T>(gn);
    mu[g] = m;
    inv_sigma[g] = T(1) / std::sqrt(v + eps);
  }
  for (std::size_t c = 0; c < d; ++c) {
    const int g = static_cast<int>(c / gs);
    const T* p = x.data() + c * S;
    T* po = out.data() + c * S;
    const T gm = gamma[c], bt = beta[c];
    for (std::size_t i = 0; i < S; ++i) po[i] = gm * (p[i] - mu[g]) * inv_sigma[g] + bt;
  }

  detail::attach(out, {x, gamma, beta},
                 [x = x.node(), gamma = gamma.node(), beta = beta.node(), groups, mu,
                  inv_sigma, d, S, gs, gn](Node<T>& o) {
    if (beta->requires_grad) {
      beta->ensure_grad();
      for (std::size_t c = 0; c < d; ++c) {
        T s = 0;
        const T* g = o.grad.data() + c * S;
        for (std::size_t i = 0; i < S; ++i) s += g[i];
        beta->grad[c] += s;
      }
    }
    if (gamma->requires_grad) {
      gamma->ensure_grad();
      for (std::size_t c = 0; c < d; ++c) {
        const int g = static_cast<int>(c / gs);
        const T* go = o.grad.data() + c * S;
        const T* px = x->data.data() + c * S;
        T s = 0;
        for (std::size_t i = 0; i < S; ++i) s += go[i] * (px[i] - mu[g]) * inv_sigma[g];
        gamma->grad[c] += s;
      }
    }
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (int g = 0; g < groups; ++g) {
      // dyhat = dout * gamma_c ; dx = inv_sigma (dyhat - mean(dyhat) - yhat mean(dyhat yhat))
      T sum_dy = 0, sum_dyy = 0;
      for (std::size_t cc = 0; cc < gs; ++cc) {
        const std::size_t c = static_cast<std::size_t>(g) * gs + cc;
        const T* go = o.grad.data() + c * S;
        const T* px = x->data.data() + c * S;
        const T gm = gamma->data[c];
        for (std::size_t i = 0; i < S; ++i) {
          T yhat = (px[i] - mu[g]) * inv_sigma[g];
          T dy = go[i] * gm;
          sum_dy += dy;
          sum_dyy += dy * yhat;
        }
      }
      const T m_dy = sum_dy / static_cast<T>(gn);
      const T m_dyy = sum_dyy / static_cast<T>(gn);
      for (std::size_t cc = 0; cc < gs; ++cc) {
        const std::size_t c = static_cast<std::size_t>(g) * gs + cc;
        const T* go = o.grad.data() + c * S;
        const T* px = x->data.data() + c * S;
        T* dx = x->grad.data() + c * S;
        const T gm = gamma->data[c];
        for (std::size_t i = 0; i < S; ++i) {
          T yhat = (px[i] - mu[g]) * inv_sigma[g];
          T dy = go[i] * gm;
          dx[i] += inv_sigma[g] * (dy - m_dy - yhat * m_dyy);
        }
      }
    }
  });
  return out;
}

// Default grouping policy: 8 channels per group, single group for narrow maps.
inline int norm_groups(std::size_t d) {
  return (d >= 8 && d % 8 == 0) ? static_cast<int>(d / 8) : 1;
}

// ---------------------------------------------------------------------------
// Spatial rearrangement ops
// ---------------------------------------------------------------------------

// Nearest-neighbor 2x upsampling of a CxHxW map.
template <class T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  check(x.rank() == 3, "upsample2x: input must be CxHxW");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor<T> out(Shape{C, 2 * H, 2 * W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx) {
        T v = x[(c * H + y) * W + xx];
        std::size_t base = (c * 2 * H + 2 * y) * 2 * W + 2 * xx;
        out[base] = v;
        out[base + 1] = v;
        out[base + 2 * W] = v;
        out[base + 2 * W + 1] = v;
      }
  detail::attach(out, {x}, [x = x.node(), C, H, W](Node<T>& o) {
    x->ensure_grad();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx) {
          std::size_t base = (c * 2 * H + 2 * y) * 2 * W + 2 * xx;
          x->grad[(c * H + y) * W + xx] +=
              o.grad[base] + o.grad[base + 1] + o.grad[base + 2 * W] + o.grad[base + 2 * W + 1];
        }
  });
  return out;
}

// 2x2 neighborhood concat: [d x H x W] -> [4d x H/2 x W/2]. Pure permutation.
template <class T>
Tensor<T> space_to_depth2(const Tensor<T>& x) {
  check(x.rank() == 3 && x.dim(1) % 2 == 0 && x.dim(2) % 2 == 0,
        "space_to_depth2: extents must be even, got " + shape_str(x.shape()));
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor<T> out(Shape{4 * C, Ho, Wo});
  for (std::size_t q = 0; q < 4; ++q) {
    const std::size_t dy = q / 2, dx = q % 2;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < Ho; ++y)
        for (std::size_t xx = 0; xx < Wo; ++xx)
          out[((q * C + c) * Ho + y) * Wo + xx] = x[(c * H + 2 * y + dy) * W + 2 * xx + dx];
  }
  detail::attach(out, {x}, [x = x.node(), C, H, W, Ho, Wo](Node<T>& o) {
    x->ensure_grad();
    for (std::size_t q = 0; q < 4; ++q) {
      const std::size_t dy = q / 2, dx = q % 2;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < Ho; ++y)
          for (std::size_t xx = 0; xx < Wo; ++xx)
            x->grad[(c * H + 2 * y + dy) * W + 2 * xx + dx] +=
                o.grad[((q * C + c) * Ho + y) * Wo + xx];
    }
  });
  return out;
}

// Channel concat of channels-first maps with identical spatial extents.
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.rank() == 3 && b.rank() == 3 && a.dim(1) == b.dim(1) && a.dim(2) == b.dim(2),
        "concat_channels: spatial mismatch " + shape_str(a.shape()) + " vs " +
            shape_str(b.shape()));
  Tensor<T> out(Shape{a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  detail::attach(out, {a, b}, [a = a.node(), b = b.node()](Node<T>& o) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += o.grad[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      const std::size_t off = a->data.size();
      for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += o.grad[off + i];
    }
  });
  return out;
}

// Adaptive average pooling of a CxHxW map to a target (h, w) grid. The linear
// low-rank projector used by the efficient-attention baseline.
template <class T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, std::size_t ho, std::size_t wo) {
  check(x.rank() == 3, "adaptive_avg_pool: input must be CxHxW");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  check(ho >= 1 && wo >= 1 && ho <= H && wo <= W, "adaptive_avg_pool: bad target size");
  Tensor<T> out(Shape{C, ho, wo});
  auto lo = [](std::size_t i, std::size_t n, std::size_t m) { return i * n / m; };
  auto hi = [](std::size_t i, std::size_t n, std::size_t m) { return (i + 1) * n / m; };
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        T s = 0;
        std::size_t cnt = 0;
        for (std::size_t y = lo(oy, H, ho); y < hi(oy, H, ho); ++y)
          for (std::size_t xx = lo(ox, W, wo); xx < hi(ox, W, wo); ++xx) {
            s += x[(c * H + y) * W + xx];
            ++cnt;
          }
        out[(c * ho + oy) * wo + ox] = s / static_cast<T>(cnt);
      }
  detail::attach(out, {x}, [x = x.node(), C, H, W, ho, wo](Node<T>& o) {
    x->ensure_grad();
    auto lo = [](std::size_t i, std::size_t n, std::size_t m) { return i * n / m; };
    auto hi = [](std::size_t i, std::size_t n, std::size_t m) { return (i + 1) * n / m; };
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          std::size_t cnt = (hi(oy, H, ho) - lo(oy, H, ho)) * (hi(ox, W, wo) - lo(ox, W, wo));
          T g = o.grad[(c * ho + oy) * wo + ox] / static_cast<T>(cnt);
          for (std::size_t y = lo(oy, H, ho); y < hi(oy, H, ho); ++y)
            for (std::size_t xx = lo(ox, W, wo); xx < hi(ox, W, wo); ++xx)
              x->grad[(c * H + y) * W + xx] += g;
        }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Map <-> sequence conversion. A d x H x W map flattens to an HW x d token
// sequence (tokens are spatial positions, row-major).
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> map_to_seq(const Tensor<T>& x) {
  check(x.rank() == 3, "map_to_seq: input must be CxHxW");
  const std::size_t d = x.dim(0), n = x.dim(1) * x.dim(2);
  return transpose(reshape(x, Shape{d, n}));
}

template <class T>
Tensor<T> seq_to_map(const Tensor<T>& s, std::size_t H, std::size_t W) {
  check(s.rank() == 2 && s.dim(0) == H * W,
        "seq_to_map: sequence length mismatch for " + std::to_string(H) + "x" + std::to_string(W));
  return reshape(transpose(s), Shape{s.dim(1), H, W});
}

// Softmax over the channel axis of a CxHxW map (per-pixel class distribution).
template <class T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  check(x.rank() == 3, "softmax_channels: input must be CxHxW");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  return reshape(transpose(softmax_rows(map_to_seq(x))), Shape{C, H, W});
}

}  // namespace mf
