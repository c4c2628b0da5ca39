#pragma once

#include "sdfa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sdfa {

struct MaskThresholds {
  double alpha = 0.15;
  double epsilon = 1e-5;
  double t1 = 0.2;
  double t2 = 0.5;
  Index k = 61;

  void validate() const {
    require(alpha >= 0 && alpha <= 1, "MaskThresholds: alpha must lie in [0, 1]");
    require(k >= 1, "MaskThresholds: K must be at least 1");
    require(t1 > 0 && t2 > 0, "MaskThresholds: t1 and t2 must be positive");
  }
};

/// Binary selection masks for the self-distilled loss. Every map is
/// N x 1 x H x W with entries exactly 0 or 1.
template <typename Scalar>
struct PrincipleMasks {
  Tensor<Scalar> photo;
  Tensor<Scalar> occ;
  Tensor<Scalar> out;
  Tensor<Scalar> visible;
};

namespace detail {
inline Index reflect(Index i, Index len) {
  if (len == 1) return 0;
  if (i < 0) return -i;
  if (i >= len) return 2 * (len - 1) - i;
  return i;
}
}  // namespace detail

/// Per-pixel structural dissimilarity (1 - SSIM) / 2 over 3x3 windows with
/// reflection padding, clamped to [0, 1].
template <typename Scalar>
Tensor<Scalar> dssim(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "dssim");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const Index h = a.h(), w = a.w();
  Tensor<Scalar> out(a.shape());
  for (Index i = 0; i < a.n(); ++i)
    for (Index ch = 0; ch < a.c(); ++ch) {
      const Scalar* pa = a.plane(i, ch);
      const Scalar* pb = b.plane(i, ch);
      Scalar* dst = out.plane(i, ch);
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
          double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
          for (Index dy = -1; dy <= 1; ++dy)
            for (Index dx = -1; dx <= 1; ++dx) {
              const Index q = detail::reflect(y + dy, h) * w + detail::reflect(x + dx, w);
              const double va = pa[q], vb = pb[q];
              mx += va;
              my += vb;
              sxx += va * va;
              syy += vb * vb;
              sxy += va * vb;
            }
          mx /= 9;
          my /= 9;
          const double var_x = sxx / 9 - mx * mx;
          const double var_y = syy / 9 - my * my;
          const double cov = sxy / 9 - mx * my;
          const double num = (2 * mx * my + c1) * (2 * cov + c2);
          const double den = (mx * mx + my * my + c1) * (var_x + var_y + c2);
          dst[y * w + x] = static_cast<Scalar>(std::clamp((1 - num / den) / 2, 0.0, 1.0));
        }
    }
  return out;
}

/// alpha * |a - b| + (1 - alpha) * DSSIM(a, b), averaged over channels.
template <typename Scalar>
Tensor<Scalar> photometric_error(const Tensor<Scalar>& reprojected, const Tensor<Scalar>& target, double alpha) {
  require_same_shape(reprojected.shape(), target.shape(), "photometric_error");
  const Tensor<Scalar> ds = dssim(reprojected, target);
  const Index hw = target.h() * target.w();
  Tensor<Scalar> out(Shape{target.n(), 1, target.h(), target.w()});
  const Scalar a = static_cast<Scalar>(alpha);
  const Scalar inv_c = Scalar(1) / static_cast<Scalar>(target.c());
  for (Index i = 0; i < target.n(); ++i)
    for (Index ch = 0; ch < target.c(); ++ch) {
      const Scalar* r = reprojected.plane(i, ch);
      const Scalar* t = target.plane(i, ch);
      const Scalar* s = ds.plane(i, ch);
      Scalar* dst = out.plane(i, 0);
      for (Index p = 0; p < hw; ++p) dst[p] += inv_c * (a * std::abs(r[p] - t[p]) + (1 - a) * s[p]);
    }
  return out;
}

/// 1 where the raw prediction reprojects at least as well as the distilled
/// one (within epsilon) and its own error is below t1.
template <typename Scalar>
Tensor<Scalar> photometric_mask(const Tensor<Scalar>& err_raw, const Tensor<Scalar>& err_distilled,
                                const MaskThresholds& th) {
  require_same_shape(err_raw.shape(), err_distilled.shape(), "photometric_mask");
  Tensor<Scalar> m(err_raw.shape());
  for (Index i = 0; i < m.size(); ++i) {
    const double r = err_raw[i], d = err_distilled[i];
    m[i] = (r - d < th.epsilon && r < th.t1) ? Scalar(1) : Scalar(0);
  }
  return m;
}

/// 1 where no right-hand neighbor within K pixels explains the pixel as
/// occluded, i.e. min_i |d(x+i) - d(x) - i| >= t2. Neighbors past the right
/// border are skipped; a pixel without neighbors is visible.
template <typename Scalar>
Tensor<Scalar> occlusion_mask(const Tensor<Scalar>& disparity, const MaskThresholds& th) {
  require(disparity.c() == 1, "occlusion_mask: expected a single-channel disparity map");
  const Index h = disparity.h(), w = disparity.w();
  Tensor<Scalar> m(disparity.shape());
  for (Index i = 0; i < disparity.n(); ++i)
    for (Index y = 0; y < h; ++y) {
      const Scalar* row = disparity.plane(i, 0) + y * w;
      Scalar* dst = m.plane(i, 0) + y * w;
      for (Index x = 0; x < w; ++x) {
        double best = std::numeric_limits<double>::infinity();
        const Index last = std::min<Index>(th.k, w - 1 - x);
        for (Index k = 1; k <= last; ++k)
          best = std::min(best, std::abs(static_cast<double>(row[x + k]) - row[x] - static_cast<double>(k)));
        dst[x] = best >= th.t2 ? Scalar(1) : Scalar(0);
      }
    }
  return m;
}

/// 1 where the correspondence x - d(p) lands inside [0, width - 1].
template <typename Scalar>
Tensor<Scalar> out_of_edge_mask(const Tensor<Scalar>& disparity, Index width) {
  require(disparity.c() == 1, "out_of_edge_mask: expected a single-channel disparity map");
  const Index h = disparity.h(), w = disparity.w();
  Tensor<Scalar> m(disparity.shape());
  for (Index i = 0; i < disparity.n(); ++i)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        const double target = static_cast<double>(x) - disparity(i, 0, y, x);
        m(i, 0, y, x) = (target >= 0 && target <= static_cast<double>(width - 1)) ? Scalar(1) : Scalar(0);
      }
  return m;
}

template <typename Scalar>
Tensor<Scalar> visible_mask(const Tensor<Scalar>& m_occ, const Tensor<Scalar>& m_out) {
  require_same_shape(m_occ.shape(), m_out.shape(), "visible_mask");
  Tensor<Scalar> m(m_occ.shape());
  m.vec() = m_occ.vec().cwiseProduct(m_out.vec());
  return m;
}

}  // namespace sdfa
