#pragma once

#include <cmath>
#include <random>
#include <string>

#include "medformer/modules.hpp"
#include "medformer/nn.hpp"
#include "medformer/tensor.hpp"

namespace mf {

// Initial semantic map generation. The token map is projected by two 3x3
// convolutions into a weight map (h*w channels) and a base map (d channels).
// The flattened weight map is softmaxed over the H*W axis and aggregates the
// base tokens by matrix product, so every semantic token is a convex
// combination of base tokens.
template <class T>
struct SemanticMapInit {
  Conv2dLayer<T> weight_conv, base_conv;
  std::size_t sem_h = 4, sem_w = 4;

  void init(std::size_t d, std::size_t h, std::size_t w, std::mt19937_64& rng) {
    sem_h = h;
    sem_w = w;
    weight_conv.init(h * w, d, 3, 1, 1, 1, rng);
    base_conv.init(d, d, 3, 1, 1, 1, rng);
  }

  void reg(ParamRegistry<T>& r, const std::string& p) {
    weight_conv.reg(r, p + ".weight_conv");
    base_conv.reg(r, p + ".base_conv");
  }

  // x: d x H x W -> semantic map d x h x w
  Tensor<T> operator()(const Tensor<T>& x) const {
    const std::size_t n = x.dim(1) * x.dim(2);
    const std::size_t l = sem_h * sem_w;
    auto weights = softmax_rows(reshape(weight_conv(x), Shape{l, n}));  // l x n
    auto base = map_to_seq(base_conv(x));                               // n x d
    return seq_to_map(matmul(weights, base), sem_h, sem_w);
  }
};

// Absolute cosine similarity between all pairs of semantic tokens.
// Diagnostic only; not on the training path.
template <class T>
Tensor<T> token_cosine_similarity(const Tensor<T>& m) {
  check(m.rank() == 3, "token_cosine_similarity: input must be d x h x w");
  const std::size_t d = m.dim(0), l = m.dim(1) * m.dim(2);
  std::vector<T> norms(l);
  for (std::size_t t = 0; t < l; ++t) {
    T s = 0;
    for (std::size_t c = 0; c < d; ++c) {
      T v = m[c * l + t];
      s += v * v;
    }
    norms[t] = std::sqrt(s);
    if (norms[t] == T(0))
      throw ValueError("token_cosine_similarity: zero-norm token at index " + std::to_string(t));
  }
  Tensor<T> out(Shape{l, l});
  for (std::size_t a = 0; a < l; ++a)
    for (std::size_t b = a; b < l; ++b) {
      T dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += m[c * l + a] * m[c * l + b];
      T v = std::abs(dot / (norms[a] * norms[b]));
      out[a * l + b] = v;
      out[b * l + a] = v;
    }
  return out;
}

}  // namespace mf
