#pragma once

#include "sdfa/autograd.hpp"
#include "sdfa/layers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace sdfa::test {

template <typename Scalar = float>
Tensor<Scalar> random_tensor(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(u(rng));
  return t;
}

/// Uniform values whose fractional part stays in [0.1, 0.9], so finite
/// differences never straddle a bilinear cell boundary.
template <typename Scalar = double>
Tensor<Scalar> off_grid_tensor(Shape shape, Rng& rng, int lo, int hi) {
  std::uniform_int_distribution<int> whole(lo, hi);
  std::uniform_real_distribution<double> frac(0.1, 0.9);
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(whole(rng) + frac(rng));
  return t;
}

inline double max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  return (a.vec() - b.vec()).cwiseAbs().maxCoeff();
}

/// Norm-wise relative error between analytic and central-difference
/// gradients of f with respect to every input.
inline double gradient_error(const std::function<Var<double>()>& f, std::vector<Var<double>> inputs,
                             double step = 1e-3) {
  for (auto& v : inputs) v.zero_grad();
  backward(f());
  double diff = 0, norm_a = 0, norm_n = 0;
  for (auto& v : inputs) {
    Tensor<double> analytic = v.has_grad() ? v.grad() : Tensor<double>(v.shape());
    for (Index i = 0; i < v.value().size(); ++i) {
      double& x = v.mutable_value()[i];
      const double saved = x;
      double fp, fm;
      {
        NoGradGuard guard;
        x = saved + step;
        fp = f().item();
        x = saved - step;
        fm = f().item();
      }
      x = saved;
      const double numeric = (fp - fm) / (2 * step);
      diff += (analytic[i] - numeric) * (analytic[i] - numeric);
      norm_a += analytic[i] * analytic[i];
      norm_n += numeric * numeric;
    }
  }
  const double denom = std::max({std::sqrt(norm_a), std::sqrt(norm_n), 1e-12});
  return std::sqrt(diff) / denom;
}

}  // namespace sdfa::test
