#pragma once

#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "medformer/nn.hpp"
#include "medformer/tensor.hpp"

namespace mf {

// Flat name -> tensor registry. Names are stable across builds of the same
// config and define the checkpoint layout (entries are written name-sorted).
template <class T>
struct ParamRegistry {
  std::vector<std::pair<std::string, Tensor<T>*>> items;

  void add(const std::string& name, Tensor<T>* t) {
    t->set_requires_grad(true);
    items.push_back({name, t});
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto& [name, t] : items) n += t->size();
    return n;
  }

  std::map<std::string, Tensor<T>*> named() const {
    std::map<std::string, Tensor<T>*> m;
    for (auto& [name, t] : items) m[name] = t;
    return m;
  }
};

template <class T>
struct Conv2dLayer {
  Tensor<T> w, b;
  int stride = 1, pad = 0, groups = 1;
  bool bias = true;

  void init(std::size_t co, std::size_t ci, std::size_t k, int stride_, int pad_,
            int groups_, std::mt19937_64& rng, bool bias_ = true) {
    stride = stride_;
    pad = pad_;
    groups = groups_;
    bias = bias_;
    const std::size_t cig = ci / groups;
    const T std_dev = static_cast<T>(std::sqrt(2.0 / static_cast<double>(cig * k * k)));
    w = Tensor<T>::randn(Shape{co, cig, k, k}, rng, std_dev);
    b = bias_ ? Tensor<T>::zeros(Shape{co}) : Tensor<T>();
  }

  void reg(ParamRegistry<T>& r, const std::string& prefix) {
    r.add(prefix + ".w", &w);
    if (bias) r.add(prefix + ".b", &b);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv2d(x, w, b, stride, pad, groups);
  }
};

template <class T>
struct GroupNormLayer {
  Tensor<T> gamma, beta;
  int groups = 1;

  void init(std::size_t d) {
    groups = norm_groups(d);
    gamma = Tensor<T>::full(Shape{d}, T(1));
    beta = Tensor<T>::zeros(Shape{d});
  }

  void reg(ParamRegistry<T>& r, const std::string& prefix) {
    r.add(prefix + ".gamma", &gamma);
    r.add(prefix + ".beta", &beta);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return group_norm(x, gamma, beta, groups);
  }
};

// Pre-activation residual block: gn -> gelu -> conv3 -> gn -> gelu -> conv3,
// with a pointwise shortcut when channel counts differ.
template <class T>
struct ResBlock {
  GroupNormLayer<T> n1, n2;
  Conv2dLayer<T> c1, c2, shortcut;
  bool project = false;

  void init(std::size_t ci, std::size_t co, std::mt19937_64& rng) {
    n1.init(ci);
    c1.init(co, ci, 3, 1, 1, 1, rng);
    n2.init(co);
    c2.init(co, co, 3, 1, 1, 1, rng);
    project = ci != co;
    if (project) shortcut.init(co, ci, 1, 1, 0, 1, rng);
  }

  void reg(ParamRegistry<T>& r, const std::string& p) {
    n1.reg(r, p + ".n1");
    c1.reg(r, p + ".c1");
    n2.reg(r, p + ".n2");
    c2.reg(r, p + ".c2");
    if (project) shortcut.reg(r, p + ".shortcut");
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    Tensor<T> h = c1(gelu(n1(x)));
    h = c2(gelu(n2(h)));
    return add(h, project ? shortcut(x) : x);
  }
};

// Depthwise separable projection (depthwise k x k, then pointwise 1 x 1).
template <class T>
struct SepConvProj {
  Conv2dLayer<T> dw, pw;

  void init(std::size_t d, std::size_t k, std::mt19937_64& rng) {
    dw.init(d, d, k, 1, static_cast<int>(k / 2), static_cast<int>(d), rng, false);
    pw.init(d, d, 1, 1, 0, 1, rng);
  }

  void reg(ParamRegistry<T>& r, const std::string& p) {
    dw.reg(r, p + ".dw");
    pw.reg(r, p + ".pw");
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return pw(dw(x)); }
};

}  // namespace mf
