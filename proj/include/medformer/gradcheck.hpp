#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "medformer/tensor.hpp"

namespace mf {

// Compares the autodiff gradient of a scalar-valued graph against central
// finite differences (f64 only; eps = 1e-5). Returns the worst relative
// error over the checked coordinates. When a coordinate budget and rng are
// given, coordinates are sampled instead of enumerated, which keeps large
// graphs affordable.
template <class F>
double grad_check(F f, std::vector<Tensor<double>*> inputs,
                  std::size_t max_coords_per_input = static_cast<std::size_t>(-1),
                  std::mt19937_64* rng = nullptr, double eps = 1e-5) {
  for (auto* in : inputs) in->set_requires_grad(true);
  Tensor<double> loss = f();
  if (loss.size() != 1)
    throw ValueError("grad_check: graph output must be scalar, got " + shape_str(loss.shape()));
  for (auto* in : inputs) in->zero_grad();
  backward(loss);

  double worst = 0.0;
  for (auto* in : inputs) {
    std::vector<std::size_t> coords;
    if (in->size() <= max_coords_per_input || !rng) {
      coords.resize(in->size());
      for (std::size_t i = 0; i < in->size(); ++i) coords[i] = i;
      if (coords.size() > max_coords_per_input) coords.resize(max_coords_per_input);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, in->size() - 1);
      for (std::size_t i = 0; i < max_coords_per_input; ++i) coords.push_back(pick(*rng));
    }
    for (std::size_t i : coords) {
      const double saved = (*in)[i];
      (*in)[i] = saved + eps;
      const double fp = f().item();
      (*in)[i] = saved - eps;
      const double fm = f().item();
      (*in)[i] = saved;
      const double fd = (fp - fm) / (2.0 * eps);
      const double ad = in->grad()[i];
      const double denom = std::max({std::abs(fd), std::abs(ad), 1e-3});
      worst = std::max(worst, std::abs(fd - ad) / denom);
    }
  }
  return worst;
}

}  // namespace mf
