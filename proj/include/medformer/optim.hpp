#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "medformer/tensor.hpp"

namespace mf {

inline double lr_schedule(double lr0, double gamma, int epoch) {
  return lr0 * std::pow(gamma, epoch);
}

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
template <class T>
double clip_global_norm(const std::vector<std::pair<std::string, Tensor<T>*>>& params,
                        double max_norm) {
  double sq = 0;
  for (auto& [name, t] : params)
    for (auto g : t->grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& [name, t] : params)
      for (auto& g : t->grad()) g *= s;
  }
  return norm;
}

// AdamW with decoupled weight decay and bias-corrected moments. Weight decay
// is applied directly to the weights, never through the gradient moments.
template <class T>
struct AdamW {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 1e-2;
  long step_count = 0;
  std::vector<std::vector<double>> m, v;

  void init(const std::vector<std::pair<std::string, Tensor<T>*>>& params) {
    m.clear();
    v.clear();
    for (auto& [name, t] : params) {
      m.emplace_back(t->size(), 0.0);
      v.emplace_back(t->size(), 0.0);
    }
    step_count = 0;
  }

  void step(const std::vector<std::pair<std::string, Tensor<T>*>>& params, double lr) {
    check(params.size() == m.size(), "adamw: state holds " + std::to_string(m.size()) +
                                         " tensors, got " + std::to_string(params.size()));
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, step_count);
    const double bc2 = 1.0 - std::pow(beta2, step_count);
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& [name, t] = params[p];
      check(t->size() == m[p].size(), "adamw: shape changed for parameter " + name);
      const auto& grad = t->grad();
      for (std::size_t i = 0; i < t->size(); ++i) {
        const double g = grad[i];
        if (!std::isfinite(g))
          throw ValueError("adamw: non-finite gradient in parameter " + name);
        m[p][i] = beta1 * m[p][i] + (1.0 - beta1) * g;
        v[p][i] = beta2 * v[p][i] + (1.0 - beta2) * g * g;
        const double mh = m[p][i] / bc1;
        const double vh = v[p][i] / bc2;
        double w = (*t)[i];
        w -= lr * weight_decay * w;
        w -= lr * mh / (std::sqrt(vh) + eps);
        (*t)[i] = static_cast<T>(w);
      }
    }
  }
};

}  // namespace mf
