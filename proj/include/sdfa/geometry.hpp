#pragma once

#include "sdfa/ops.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace sdfa {

/// Discrete disparity levels in pixels, ordered from d_max down to d_min with
/// geometric spacing.
class DisparityLevels {
 public:
  DisparityLevels() = default;

  double d_min() const { return d_min_; }
  double d_max() const { return d_max_; }
  Index count() const { return static_cast<Index>(values_.size()); }
  const std::vector<double>& values() const { return values_; }
  double operator[](Index n) const { return values_[static_cast<std::size_t>(n)]; }

  friend DisparityLevels quantize_disparities(double d_min, double d_max, Index count);

 private:
  double d_min_ = 0;
  double d_max_ = 0;
  std::vector<double> values_;
};

/// d_n = d_max * (d_min / d_max)^(n / (N - 1)), n = 0..N-1.
inline DisparityLevels quantize_disparities(double d_min, double d_max, Index count) {
  require(d_min > 0, "quantize_disparities: d_min must be positive");
  require(d_max >= d_min, "quantize_disparities: d_max must not be below d_min");
  require(count >= 1, "quantize_disparities: need at least one level");
  require(count >= 2 || d_min == d_max, "quantize_disparities: a range needs at least two levels");
  DisparityLevels levels;
  levels.d_min_ = d_min;
  levels.d_max_ = d_max;
  levels.values_.resize(static_cast<std::size_t>(count));
  if (count == 1) {
    levels.values_[0] = d_max;
    return levels;
  }
  const double ratio = d_min / d_max;
  for (Index n = 0; n < count; ++n)
    levels.values_[static_cast<std::size_t>(n)] =
        d_max * std::pow(ratio, static_cast<double>(n) / static_cast<double>(count - 1));
  levels.values_.front() = d_max;
  levels.values_.back() = d_min;
  return levels;
}

/// Stereo baseline (meters) and horizontal focal length (pixels).
struct CameraRig {
  double baseline = 0.54;
  double focal_x = 720.0;

  double bf() const { return baseline * focal_x; }
  void validate() const {
    require(baseline > 0 && focal_x > 0, "CameraRig: baseline and focal length must be positive");
  }
};

namespace detail {

/// One-dimensional linear tap with border clamping. `inside` is false when the
/// coordinate was clamped, in which case it carries no gradient.
template <typename Scalar>
struct LinearTap {
  Index i0 = 0;
  Index i1 = 0;
  Scalar frac = 0;
  bool inside = true;
};

template <typename Scalar>
inline LinearTap<Scalar> linear_tap(Scalar coord, Index len) {
  LinearTap<Scalar> t;
  const Scalar hi = static_cast<Scalar>(len - 1);
  Scalar c = coord;
  if (!(c >= 0)) {
    c = 0;
    t.inside = false;
  } else if (c > hi) {
    c = hi;
    t.inside = false;
  }
  if (len < 2) {
    t.i0 = t.i1 = 0;
    t.frac = 0;
    return t;
  }
  Index i0 = static_cast<Index>(std::floor(c));
  if (i0 > len - 2) i0 = len - 2;
  t.i0 = i0;
  t.i1 = i0 + 1;
  t.frac = c - static_cast<Scalar>(i0);
  return t;
}

}  // namespace detail

/// Samples F (N x C x H x W) at the continuous pixel locations coords
/// (N x 2 x H' x W', channel 0 = x, channel 1 = y) with bilinear weights and
/// border clamping. Differentiable in F and coords. Non-finite coordinates
/// give NaN so the failure reaches the loss.
template <typename Scalar>
Var<Scalar> bilinear_sample(const Var<Scalar>& feature, const Var<Scalar>& coords) {
  const Shape fs = feature.shape();
  const Shape cs = coords.shape();
  require(cs.c == 2, "bilinear_sample: coords must have 2 channels, got " + std::to_string(cs.c));
  require(cs.n == fs.n, "bilinear_sample: batch mismatch");
  const Index hw_out = cs.h * cs.w;
  Tensor<Scalar> out(Shape{fs.n, fs.c, cs.h, cs.w});
  for (Index i = 0; i < fs.n; ++i) {
    const Scalar* cx = coords.value().plane(i, 0);
    const Scalar* cy = coords.value().plane(i, 1);
    for (Index q = 0; q < hw_out; ++q) {
      const auto tx = detail::linear_tap(cx[q], fs.w);
      const auto ty = detail::linear_tap(cy[q], fs.h);
      const Scalar w00 = (1 - tx.frac) * (1 - ty.frac), w01 = tx.frac * (1 - ty.frac);
      const Scalar w10 = (1 - tx.frac) * ty.frac, w11 = tx.frac * ty.frac;
      const Index a = ty.i0 * fs.w + tx.i0, b = ty.i0 * fs.w + tx.i1;
      const Index c = ty.i1 * fs.w + tx.i0, d = ty.i1 * fs.w + tx.i1;
      const bool finite = std::isfinite(cx[q]) && std::isfinite(cy[q]);
      for (Index ch = 0; ch < fs.c; ++ch) {
        const Scalar* f = feature.value().plane(i, ch);
        out.plane(i, ch)[q] = finite ? w00 * f[a] + w01 * f[b] + w10 * f[c] + w11 * f[d]
                                     : std::numeric_limits<Scalar>::quiet_NaN();
      }
    }
  }
  return make_result<Scalar>(std::move(out), {feature, coords}, [fs, cs, hw_out](Node<Scalar>& n) {
    const auto& fv = input_value(n, 0);
    const auto& cv = input_value(n, 1);
    auto* gf = input_grad(n, 0);
    auto* gc = input_grad(n, 1);
    for (Index i = 0; i < fs.n; ++i) {
      const Scalar* cx = cv.plane(i, 0);
      const Scalar* cy = cv.plane(i, 1);
      for (Index q = 0; q < hw_out; ++q) {
        const auto tx = detail::linear_tap(cx[q], fs.w);
        const auto ty = detail::linear_tap(cy[q], fs.h);
        const Index a = ty.i0 * fs.w + tx.i0, b = ty.i0 * fs.w + tx.i1;
        const Index c = ty.i1 * fs.w + tx.i0, d = ty.i1 * fs.w + tx.i1;
        Scalar dx = 0, dy = 0;
        for (Index ch = 0; ch < fs.c; ++ch) {
          const Scalar g = n.grad.plane(i, ch)[q];
          if (g == Scalar(0)) continue;
          if (gf) {
            Scalar* gp = gf->plane(i, ch);
            gp[a] += g * (1 - tx.frac) * (1 - ty.frac);
            gp[b] += g * tx.frac * (1 - ty.frac);
            gp[c] += g * (1 - tx.frac) * ty.frac;
            gp[d] += g * tx.frac * ty.frac;
          }
          if (gc) {
            const Scalar* f = fv.plane(i, ch);
            dx += g * ((f[b] - f[a]) * (1 - ty.frac) + (f[d] - f[c]) * ty.frac);
            dy += g * ((f[c] - f[a]) * (1 - tx.frac) + (f[d] - f[b]) * tx.frac);
          }
        }
        if (gc) {
          if (tx.inside && fs.w > 1) gc->plane(i, 0)[q] += dx;
          if (ty.inside && fs.h > 1) gc->plane(i, 1)[q] += dy;
        }
      }
    }
  });
}

/// Pixel-center grid (x, y) of shape N x 2 x H x W.
template <typename Scalar>
Tensor<Scalar> pixel_grid(Index n, Index h, Index w) {
  Tensor<Scalar> grid(Shape{n, 2, h, w});
  for (Index i = 0; i < n; ++i)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        grid(i, 0, y, x) = static_cast<Scalar>(x);
        grid(i, 1, y, x) = static_cast<Scalar>(y);
      }
  return grid;
}

/// Resamples F at p + delta(p): the offset-guided feature refinement.
template <typename Scalar>
Var<Scalar> refine(const Var<Scalar>& feature, const Var<Scalar>& delta) {
  const Shape fs = feature.shape();
  const Shape ds = delta.shape();
  require(ds.c == 2, "refine: offset map must have 2 channels");
  require(ds.n == fs.n && ds.h == fs.h && ds.w == fs.w,
          "refine: offset map " + ds.str() + " does not match feature " + fs.str());
  Var<Scalar> grid(pixel_grid<Scalar>(fs.n, fs.h, fs.w));
  return bilinear_sample(feature, add(grid, delta));
}

/// Softmax over the level axis followed by the probability-weighted sum of
/// the disparity levels. Returns N x 1 x H x W in pixels.
template <typename Scalar>
Var<Scalar> volume_to_disparity(const Var<Scalar>& logits, const DisparityLevels& levels) {
  const Shape s = logits.shape();
  require(s.c == levels.count(), "volume_to_disparity: volume has " + std::to_string(s.c) +
                                     " levels, expected " + std::to_string(levels.count()));
  const Index hw = s.h * s.w;
  Tensor<Scalar> out(Shape{s.n, 1, s.h, s.w});
  Tensor<Scalar> prob(s);
  for (Index i = 0; i < s.n; ++i) {
    auto l = logits.value().matrix(i);
    auto p = prob.matrix(i);
    p = (l.rowwise() - l.colwise().maxCoeff()).array().exp().matrix();
    p.array().rowwise() /= p.colwise().sum().array();
    for (Index q = 0; q < hw; ++q) {
      Scalar d = 0;
      for (Index k = 0; k < s.c; ++k) d += p(k, q) * static_cast<Scalar>(levels[k]);
      out.plane(i, 0)[q] = d;
    }
  }
  return make_result<Scalar>(std::move(out), {logits},
                             [s, hw, levels, prob = std::move(prob)](Node<Scalar>& n) {
                               auto* g = input_grad(n, 0);
                               if (!g) return;
                               for (Index i = 0; i < s.n; ++i)
                                 for (Index q = 0; q < hw; ++q) {
                                   const Scalar d = n.value.plane(i, 0)[q];
                                   const Scalar go = n.grad.plane(i, 0)[q];
                                   for (Index k = 0; k < s.c; ++k)
                                     g->plane(i, k)[q] += go * prob.plane(i, k)[q] *
                                                          (static_cast<Scalar>(levels[k]) - d);
                                 }
                             });
}

/// Softmax over the channel axis (the disparity-probability volume).
template <typename Scalar>
Tensor<Scalar> softmax_channels(const Tensor<Scalar>& logits) {
  Tensor<Scalar> prob(logits.shape());
  for (Index i = 0; i < logits.n(); ++i) {
    auto l = logits.matrix(i);
    auto p = prob.matrix(i);
    p = (l.rowwise() - l.colwise().maxCoeff()).array().exp().matrix();
    p.array().rowwise() /= p.colwise().sum().array();
  }
  return prob;
}

/// D = B * f_x / d, element-wise.
template <typename Scalar>
Var<Scalar> disparity_to_depth(const Var<Scalar>& disparity, const CameraRig& rig) {
  rig.validate();
  const auto& d = disparity.value().vec();
  require((d.array() > Scalar(0)).all(), "disparity_to_depth: disparity must be positive");
  const Scalar bf = static_cast<Scalar>(rig.bf());
  Tensor<Scalar> out(disparity.shape());
  out.vec() = (bf / d.array()).matrix();
  return make_result<Scalar>(std::move(out), {disparity}, [bf](Node<Scalar>& n) {
    if (auto* g = input_grad(n, 0)) {
      const auto& dv = input_value(n, 0).vec().array();
      g->vec().array() -= n.grad.vec().array() * bf / dv.square();
    }
  });
}

/// Synthesizes the right view from the left logit volume and the left image.
/// Channel n of the volume and the image are both shifted by d_n (sampled at
/// x + d_n, border clamped); the softmax of the shifted volume weights the
/// shifted images.
template <typename Scalar>
Var<Scalar> synthesize_right(const Var<Scalar>& logits, const Var<Scalar>& left,
                             const DisparityLevels& levels) {
  const Shape vs = logits.shape();
  const Shape is = left.shape();
  require(vs.c == levels.count(), "synthesize_right: level count mismatch");
  require(vs.n == is.n && vs.h == is.h && vs.w == is.w,
          "synthesize_right: volume " + vs.str() + " does not match image " + is.str());
  const Index h = vs.h, w = vs.w, levels_n = vs.c;

  std::vector<detail::LinearTap<Scalar>> taps(static_cast<std::size_t>(levels_n * w));
  for (Index k = 0; k < levels_n; ++k)
    for (Index x = 0; x < w; ++x)
      taps[static_cast<std::size_t>(k * w + x)] =
          detail::linear_tap(static_cast<Scalar>(x) + static_cast<Scalar>(levels[k]), w);

  Tensor<Scalar> out(is);
  std::vector<Scalar> shifted(static_cast<std::size_t>(levels_n));
  for (Index i = 0; i < vs.n; ++i)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        Scalar mx = -std::numeric_limits<Scalar>::infinity();
        for (Index k = 0; k < levels_n; ++k) {
          const auto& t = taps[static_cast<std::size_t>(k * w + x)];
          const Scalar* row = logits.value().plane(i, k) + y * w;
          shifted[k] = row[t.i0] * (1 - t.frac) + row[t.i1] * t.frac;
          mx = std::max(mx, shifted[k]);
        }
        Scalar z = 0;
        for (Index k = 0; k < levels_n; ++k) z += (shifted[k] = std::exp(shifted[k] - mx));
        for (Index ch = 0; ch < is.c; ++ch) {
          const Scalar* row = left.value().plane(i, ch) + y * w;
          Scalar acc = 0;
          for (Index k = 0; k < levels_n; ++k) {
            const auto& t = taps[static_cast<std::size_t>(k * w + x)];
            acc += shifted[k] * (row[t.i0] * (1 - t.frac) + row[t.i1] * t.frac);
          }
          out.plane(i, ch)[y * w + x] = acc / z;
        }
      }

  return make_result<Scalar>(
      std::move(out), {logits, left}, [vs, is, h, w, levels_n, taps](Node<Scalar>& n) {
        const auto& lv = input_value(n, 0);
        const auto& iv = input_value(n, 1);
        auto* gl = input_grad(n, 0);
        auto* gi = input_grad(n, 1);
        std::vector<Scalar> p(static_cast<std::size_t>(levels_n)), a(static_cast<std::size_t>(levels_n));
        for (Index i = 0; i < vs.n; ++i)
          for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) {
              Scalar mx = -std::numeric_limits<Scalar>::infinity();
              for (Index k = 0; k < levels_n; ++k) {
                const auto& t = taps[static_cast<std::size_t>(k * w + x)];
                const Scalar* row = lv.plane(i, k) + y * w;
                p[k] = row[t.i0] * (1 - t.frac) + row[t.i1] * t.frac;
                mx = std::max(mx, p[k]);
              }
              Scalar z = 0;
              for (Index k = 0; k < levels_n; ++k) z += (p[k] = std::exp(p[k] - mx));
              for (Index k = 0; k < levels_n; ++k) p[k] /= z;

              std::fill(a.begin(), a.end(), Scalar(0));
              for (Index ch = 0; ch < is.c; ++ch) {
                const Scalar go = n.grad.plane(i, ch)[y * w + x];
                if (go == Scalar(0)) continue;
                const Scalar* row = iv.plane(i, ch) + y * w;
                Scalar* grow = gi ? gi->plane(i, ch) + y * w : nullptr;
                for (Index k = 0; k < levels_n; ++k) {
                  const auto& t = taps[static_cast<std::size_t>(k * w + x)];
                  a[k] += go * (row[t.i0] * (1 - t.frac) + row[t.i1] * t.frac);
                  if (grow) {
                    grow[t.i0] += go * p[k] * (1 - t.frac);
                    grow[t.i1] += go * p[k] * t.frac;
                  }
                }
              }
              if (!gl) continue;
              Scalar mean_a = 0;
              for (Index k = 0; k < levels_n; ++k) mean_a += p[k] * a[k];
              for (Index k = 0; k < levels_n; ++k) {
                const Scalar dl = p[k] * (a[k] - mean_a);
                const auto& t = taps[static_cast<std::size_t>(k * w + x)];
                Scalar* grow = gl->plane(i, k) + y * w;
                grow[t.i0] += dl * (1 - t.frac);
                grow[t.i1] += dl * t.frac;
              }
            }
      });
}

/// Warps the right view into the left view: Î^l(p) = right(p - [B f_x / D(p), 0]).
/// Differentiable in the right image and in depth.
template <typename Scalar>
Var<Scalar> reproject_left(const Var<Scalar>& right, const Var<Scalar>& depth, const CameraRig& rig) {
  rig.validate();
  const Shape rs = right.shape();
  const Shape ds = depth.shape();
  require(ds.c == 1 && ds.n == rs.n && ds.h == rs.h && ds.w == rs.w,
          "reproject_left: depth " + ds.str() + " does not match image " + rs.str());
  require((depth.value().vec().array() > Scalar(0)).all(), "reproject_left: depth must be positive");
  const Scalar bf = static_cast<Scalar>(rig.bf());
  const Index h = rs.h, w = rs.w;
  Tensor<Scalar> out(rs);
  for (Index i = 0; i < rs.n; ++i)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        const Scalar disp = bf / depth.value().plane(i, 0)[y * w + x];
        const auto t = detail::linear_tap(static_cast<Scalar>(x) - disp, w);
        for (Index ch = 0; ch < rs.c; ++ch) {
          const Scalar* row = right.value().plane(i, ch) + y * w;
          out.plane(i, ch)[y * w + x] = row[t.i0] * (1 - t.frac) + row[t.i1] * t.frac;
        }
      }
  return make_result<Scalar>(std::move(out), {right, depth}, [rs, h, w, bf](Node<Scalar>& n) {
    const auto& rv = input_value(n, 0);
    const auto& dv = input_value(n, 1);
    auto* gr = input_grad(n, 0);
    auto* gd = input_grad(n, 1);
    for (Index i = 0; i < rs.n; ++i)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
          const Scalar depth_v = dv.plane(i, 0)[y * w + x];
          const Scalar disp = bf / depth_v;
          const auto t = detail::linear_tap(static_cast<Scalar>(x) - disp, w);
          Scalar dcoord = 0;
          for (Index ch = 0; ch < rs.c; ++ch) {
            const Scalar go = n.grad.plane(i, ch)[y * w + x];
            const Scalar* row = rv.plane(i, ch) + y * w;
            if (gr) {
              Scalar* grow = gr->plane(i, ch) + y * w;
              grow[t.i0] += go * (1 - t.frac);
              grow[t.i1] += go * t.frac;
            }
            dcoord += go * (row[t.i1] - row[t.i0]);
          }
          // coord = x - bf / D  =>  d coord / dD = bf / D^2
          if (gd && t.inside && w > 1) gd->plane(i, 0)[y * w + x] += dcoord * bf / (depth_v * depth_v);
        }
  });
}

}  // namespace sdfa
