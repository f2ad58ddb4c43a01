#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "medformer/tensor.hpp"

namespace mf {

namespace detail {

template <class T>
void check_labels(const Tensor<T>& probs, const std::vector<std::uint8_t>& labels) {
  check(probs.rank() == 3, "loss: probs must be CxHxW, got " + shape_str(probs.shape()));
  const std::size_t C = probs.dim(0);
  const std::size_t n = probs.dim(1) * probs.dim(2);
  check(labels.size() == n, "loss: label count " + std::to_string(labels.size()) +
                                " != pixel count " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] >= C)
      throw ValueError("loss: label " + std::to_string(labels[i]) + " out of range [0," +
                       std::to_string(C) + ") at pixel " + std::to_string(i));
}

}  // namespace detail

// Mean over pixels of -log(probability at the true class). Expects
// post-softmax probabilities; the log argument is clamped at 1e-12.
template <class T>
Tensor<T> ce_loss(const Tensor<T>& probs, const std::vector<std::uint8_t>& labels) {
  detail::check_labels(probs, labels);
  const std::size_t n = probs.dim(1) * probs.dim(2);
  constexpr double kClamp = 1e-12;
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double p = probs[labels[i] * n + i];
    acc -= std::log(std::max(p, kClamp));
  }
  Tensor<T> out(Shape{1}, std::vector<T>{static_cast<T>(acc / n)});
  detail::attach(out, {probs}, [p = probs.node(), labels, n](Node<T>& o) {
    constexpr double kClamp = 1e-12;
    p->ensure_grad();
    const T g = o.grad[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      double pv = p->data[labels[i] * n + i];
      if (pv > kClamp) p->grad[labels[i] * n + i] -= g / static_cast<T>(pv);
    }
  });
  return out;
}

// Soft Dice loss over all classes with smoothing eps = 1e-5:
// (1/C) sum_t (1 - (2 sum y yhat + eps) / (sum y + sum yhat + eps)).
template <class T>
Tensor<T> dice_loss(const Tensor<T>& probs, const std::vector<std::uint8_t>& labels) {
  detail::check_labels(probs, labels);
  const std::size_t C = probs.dim(0);
  const std::size_t n = probs.dim(1) * probs.dim(2);
  constexpr double kEps = 1e-5;
  std::vector<double> num(C), den(C);
  double loss = 0;
  for (std::size_t t = 0; t < C; ++t) {
    double inter = 0, sum_y = 0, sum_p = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double pv = probs[t * n + i];
      const double yv = labels[i] == t ? 1.0 : 0.0;
      inter += yv * pv;
      sum_y += yv;
      sum_p += pv;
    }
    num[t] = 2.0 * inter + kEps;
    den[t] = sum_y + sum_p + kEps;
    loss += 1.0 - num[t] / den[t];
  }
  loss /= static_cast<double>(C);
  Tensor<T> out(Shape{1}, std::vector<T>{static_cast<T>(loss)});
  detail::attach(out, {probs}, [p = probs.node(), labels, num, den, C, n](Node<T>& o) {
    p->ensure_grad();
    const double g = o.grad[0] / static_cast<double>(C);
    for (std::size_t t = 0; t < C; ++t) {
      const double d2 = den[t] * den[t];
      for (std::size_t i = 0; i < n; ++i) {
        const double yv = labels[i] == t ? 1.0 : 0.0;
        // d/dp_t^i [1 - num/den] = -(2 y den - num) / den^2
        p->grad[t * n + i] -= static_cast<T>(g * (2.0 * yv * den[t] - num[t]) / d2);
      }
    }
  });
  return out;
}

template <class T>
Tensor<T> total_loss(const Tensor<T>& probs, const std::vector<std::uint8_t>& labels) {
  return add(ce_loss(probs, labels), dice_loss(probs, labels));
}

}  // namespace mf
