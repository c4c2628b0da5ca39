#pragma once

#include "sdfa/autograd.hpp"

#include <algorithm>
#include <cmath>

namespace sdfa {

// ---------------------------------------------------------------------------
// Element-wise arithmetic

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Scalar> out(a.shape());
  out.vec() = a.value().vec() + b.value().vec();
  return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& n) {
    if (auto* g = input_grad(n, 0)) g->vec() += n.grad.vec();
    if (auto* g = input_grad(n, 1)) g->vec() += n.grad.vec();
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<Scalar> out(a.shape());
  out.vec() = a.value().vec() - b.value().vec();
  return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& n) {
    if (auto* g = input_grad(n, 0)) g->vec() += n.grad.vec();
    if (auto* g = input_grad(n, 1)) g->vec() -= n.grad.vec();
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<Scalar> out(a.shape());
  out.vec() = a.value().vec().cwiseProduct(b.value().vec());
  return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& n) {
    if (auto* g = input_grad(n, 0)) g->vec() += n.grad.vec().cwiseProduct(input_value(n, 1).vec());
    if (auto* g = input_grad(n, 1)) g->vec() += n.grad.vec().cwiseProduct(input_value(n, 0).vec());
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  Tensor<Scalar> out(a.shape());
  out.vec() = a.value().vec() * s;
  return make_result<Scalar>(std::move(out), {a}, [s](Node<Scalar>& n) {
    if (auto* g = input_grad(n, 0)) g->vec() += n.grad.vec() * s;
  });
}

template <typename Scalar>
Var<Scalar> abs(const Var<Scalar>& a) {
  Tensor<Scalar> out(a.shape());
  out.vec() = a.value().vec().cwiseAbs();
  return make_result<Scalar>(std::move(out), {a}, [](Node<Scalar>& n) {
    if (auto* g = input_grad(n, 0)) {
      const auto& x = input_value(n, 0).vec();
      for (Index i = 0; i < x.size(); ++i) {
        const Scalar sgn = x[i] > 0 ? Scalar(1) : (x[i] < 0 ? Scalar(-1) : Scalar(0));
        (*g)[i] += sgn * n.grad[i];
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> elu(const Var<Scalar>& a) {
  Tensor<Scalar> out(a.shape());
  const auto& x = a.value().vec();
  for (Index i = 0; i < x.size(); ++i) out[i] = x[i] > 0 ? x[i] : std::expm1(x[i]);
  return make_result<Scalar>(std::move(out), {a}, [](Node<Scalar>& n) {
    if (auto* g = input_grad(n, 0)) {
      const auto& x = input_value(n, 0).vec();
      for (Index i = 0; i < x.size(); ++i) {
        (*g)[i] += n.grad[i] * (x[i] > 0 ? Scalar(1) : n.value[i] + Scalar(1));
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  Tensor<Scalar> out(Shape{1, 1, 1, 1});
  out[0] = a.value().vec().sum();
  return make_result<Scalar>(std::move(out), {a}, [](Node<Scalar>& n) {
    if (auto* g = input_grad(n, 0)) g->vec().array() += n.grad[0];
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  require(a.value().size() > 0, "mean: empty tensor");
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.value().size()));
}

/// Sum of scalar terms with weights; zero-weight terms are left out of the graph.
template <typename Scalar>
Var<Scalar> weighted_sum(const std::vector<std::pair<Var<Scalar>, Scalar>>& terms) {
  Var<Scalar> total(Tensor<Scalar>(Shape{1, 1, 1, 1}, Scalar(0)));
  for (const auto& [term, weight] : terms) {
    if (weight == Scalar(0)) continue;
    total = add(total, weight == Scalar(1) ? term : scale(term, weight));
  }
  return total;
}

// ---------------------------------------------------------------------------
// Layout

template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  require(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w, "concat_channels: spatial mismatch");
  Tensor<Scalar> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const Index pa = sa.c * sa.h * sa.w, pb = sb.c * sb.h * sb.w;
  for (Index i = 0; i < sa.n; ++i) {
    out.vec().segment(i * (pa + pb), pa) = a.value().vec().segment(i * pa, pa);
    out.vec().segment(i * (pa + pb) + pa, pb) = b.value().vec().segment(i * pb, pb);
  }
  return make_result<Scalar>(std::move(out), {a, b}, [pa, pb, nb = sa.n](Node<Scalar>& n) {
    if (auto* g = input_grad(n, 0))
      for (Index i = 0; i < nb; ++i) g->vec().segment(i * pa, pa) += n.grad.vec().segment(i * (pa + pb), pa);
    if (auto* g = input_grad(n, 1))
      for (Index i = 0; i < nb; ++i)
        g->vec().segment(i * pb, pb) += n.grad.vec().segment(i * (pa + pb) + pa, pb);
  });
}

template <typename Scalar>
Var<Scalar> flip_width(const Var<Scalar>& a) {
  return make_result<Scalar>(flip_width(a.value()), {a}, [](Node<Scalar>& n) {
    if (auto* g = input_grad(n, 0)) g->vec() += flip_width(n.grad).vec();
  });
}

// ---------------------------------------------------------------------------
// Resampling

namespace detail {
/// Source coordinate of a 2x bilinear upsample with half-pixel centers.
template <typename Scalar>
inline void upsample_source(Index dst, Index src_len, Index& i0, Index& i1, Scalar& frac) {
  Scalar s = (static_cast<Scalar>(dst) + Scalar(0.5)) * Scalar(0.5) - Scalar(0.5);
  if (s < 0) s = 0;
  i0 = std::min<Index>(static_cast<Index>(s), src_len - 1);
  i1 = std::min<Index>(i0 + 1, src_len - 1);
  frac = s - static_cast<Scalar>(i0);
}
}  // namespace detail

/// Exact 2x bilinear upsampling (align-corners disabled).
template <typename Scalar>
Var<Scalar> upsample_bilinear2x(const Var<Scalar>& a) {
  const Shape s = a.shape();
  const Index ho = 2 * s.h, wo = 2 * s.w;
  Tensor<Scalar> out(Shape{s.n, s.c, ho, wo});
  for (Index p = 0; p < s.n * s.c; ++p) {
    const Scalar* src = a.value().data() + p * s.h * s.w;
    Scalar* dst = out.data() + p * ho * wo;
    for (Index y = 0; y < ho; ++y) {
      Index y0, y1;
      Scalar fy;
      detail::upsample_source(y, s.h, y0, y1, fy);
      for (Index x = 0; x < wo; ++x) {
        Index x0, x1;
        Scalar fx;
        detail::upsample_source(x, s.w, x0, x1, fx);
        const Scalar top = src[y0 * s.w + x0] * (1 - fx) + src[y0 * s.w + x1] * fx;
        const Scalar bot = src[y1 * s.w + x0] * (1 - fx) + src[y1 * s.w + x1] * fx;
        dst[y * wo + x] = top * (1 - fy) + bot * fy;
      }
    }
  }
  return make_result<Scalar>(std::move(out), {a}, [s, ho, wo](Node<Scalar>& n) {
    auto* g = input_grad(n, 0);
    if (!g) return;
    for (Index p = 0; p < s.n * s.c; ++p) {
      const Scalar* go = n.grad.data() + p * ho * wo;
      Scalar* gi = g->data() + p * s.h * s.w;
      for (Index y = 0; y < ho; ++y) {
        Index y0, y1;
        Scalar fy;
        detail::upsample_source(y, s.h, y0, y1, fy);
        for (Index x = 0; x < wo; ++x) {
          Index x0, x1;
          Scalar fx;
          detail::upsample_source(x, s.w, x0, x1, fx);
          const Scalar v = go[y * wo + x];
          gi[y0 * s.w + x0] += v * (1 - fy) * (1 - fx);
          gi[y0 * s.w + x1] += v * (1 - fy) * fx;
          gi[y1 * s.w + x0] += v * fy * (1 - fx);
          gi[y1 * s.w + x1] += v * fy * fx;
        }
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> upsample_nearest2x(const Var<Scalar>& a) {
  const Shape s = a.shape();
  const Index ho = 2 * s.h, wo = 2 * s.w;
  Tensor<Scalar> out(Shape{s.n, s.c, ho, wo});
  for (Index p = 0; p < s.n * s.c; ++p) {
    const Scalar* src = a.value().data() + p * s.h * s.w;
    Scalar* dst = out.data() + p * ho * wo;
    for (Index y = 0; y < ho; ++y)
      for (Index x = 0; x < wo; ++x) dst[y * wo + x] = src[(y / 2) * s.w + x / 2];
  }
  return make_result<Scalar>(std::move(out), {a}, [s, ho, wo](Node<Scalar>& n) {
    auto* g = input_grad(n, 0);
    if (!g) return;
    for (Index p = 0; p < s.n * s.c; ++p) {
      const Scalar* go = n.grad.data() + p * ho * wo;
      Scalar* gi = g->data() + p * s.h * s.w;
      for (Index y = 0; y < ho; ++y)
        for (Index x = 0; x < wo; ++x) gi[(y / 2) * s.w + x / 2] += go[y * wo + x];
    }
  });
}

/// 2x2 average pooling with stride 2; odd trailing rows/columns are dropped.
template <typename Scalar>
Var<Scalar> avg_pool2x(const Var<Scalar>& a) {
  const Shape s = a.shape();
  const Index ho = s.h / 2, wo = s.w / 2;
  require(ho > 0 && wo > 0, "avg_pool2x: input too small");
  Tensor<Scalar> out(Shape{s.n, s.c, ho, wo});
  for (Index p = 0; p < s.n * s.c; ++p) {
    const Scalar* src = a.value().data() + p * s.h * s.w;
    Scalar* dst = out.data() + p * ho * wo;
    for (Index y = 0; y < ho; ++y)
      for (Index x = 0; x < wo; ++x) {
        const Scalar* r0 = src + 2 * y * s.w + 2 * x;
        dst[y * wo + x] = Scalar(0.25) * (r0[0] + r0[1] + r0[s.w] + r0[s.w + 1]);
      }
  }
  return make_result<Scalar>(std::move(out), {a}, [s, ho, wo](Node<Scalar>& n) {
    auto* g = input_grad(n, 0);
    if (!g) return;
    for (Index p = 0; p < s.n * s.c; ++p) {
      const Scalar* go = n.grad.data() + p * ho * wo;
      Scalar* gi = g->data() + p * s.h * s.w;
      for (Index y = 0; y < ho; ++y)
        for (Index x = 0; x < wo; ++x) {
          const Scalar v = Scalar(0.25) * go[y * wo + x];
          Scalar* r0 = gi + 2 * y * s.w + 2 * x;
          r0[0] += v;
          r0[1] += v;
          r0[s.w] += v;
          r0[s.w + 1] += v;
        }
    }
  });
}

/// Per-pixel Euclidean norm across channels, N x 1 x H x W.
template <typename Scalar>
Var<Scalar> channel_l2_norm(const Var<Scalar>& a) {
  const Shape s = a.shape();
  Tensor<Scalar> out(Shape{s.n, 1, s.h, s.w});
  for (Index i = 0; i < s.n; ++i) out.matrix(i) = a.value().matrix(i).colwise().norm();
  return make_result<Scalar>(std::move(out), {a}, [s](Node<Scalar>& n) {
    auto* g = input_grad(n, 0);
    if (!g) return;
    const auto& x = input_value(n, 0);
    for (Index i = 0; i < s.n; ++i)
      for (Index p = 0; p < s.h * s.w; ++p) {
        const Scalar norm = n.value[i * s.h * s.w + p];
        if (norm <= Scalar(0)) continue;
        const Scalar k = n.grad[i * s.h * s.w + p] / norm;
        for (Index c = 0; c < s.c; ++c) g->plane(i, c)[p] += k * x.plane(i, c)[p];
      }
  });
}

// ---------------------------------------------------------------------------
// Convolution

namespace detail {

/// Unfolds a C x H x W image into (C*k*k) x (Ho*Wo) patch columns, zero padded.
template <typename Scalar>
void im2col(const Scalar* in, Index c, Index h, Index w, Index k, Index stride, Index pad, Index ho,
            Index wo, Scalar* col) {
  for (Index ch = 0; ch < c; ++ch)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* row = col + ((ch * k + ky) * k + kx) * ho * wo;
        const Scalar* plane = in + ch * h * w;
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride + ky - pad;
          Scalar* dst = row + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, Scalar(0));
            continue;
          }
          const Scalar* src = plane + iy * w;
          if (stride == 1) {
            const Index shift = kx - pad;
            const Index lo = std::max<Index>(0, -shift);
            const Index hi = std::min<Index>(wo, w - shift);
            for (Index ox = 0; ox < lo; ++ox) dst[ox] = 0;
            for (Index ox = lo; ox < hi; ++ox) dst[ox] = src[ox + shift];
            for (Index ox = std::max(hi, lo); ox < wo; ++ox) dst[ox] = 0;
          } else {
            for (Index ox = 0; ox < wo; ++ox) {
              const Index ix = ox * stride + kx - pad;
              dst[ox] = (ix >= 0 && ix < w) ? src[ix] : Scalar(0);
            }
          }
        }
      }
}

template <typename Scalar>
void col2im(const Scalar* col, Index c, Index h, Index w, Index k, Index stride, Index pad, Index ho,
            Index wo, Scalar* out) {
  for (Index ch = 0; ch < c; ++ch)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        const Scalar* row = col + ((ch * k + ky) * k + kx) * ho * wo;
        Scalar* plane = out + ch * h * w;
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          const Scalar* src = row + oy * wo;
          Scalar* dst = plane + iy * w;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace detail

/// 2-D convolution of NCHW input with weights Cout x Cin x k x k (k odd,
/// "same" padding) and a per-channel bias. Bias may be an empty Var.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   Index stride = 1) {
  const Shape s = x.shape();
  const Shape ws = weight.shape();
  require(ws.c == s.c, "conv2d: input has " + std::to_string(s.c) + " channels, weights expect " +
                           std::to_string(ws.c));
  require(ws.h == ws.w && ws.h % 2 == 1, "conv2d: kernel must be square and odd");
  const Index k = ws.h, pad = k / 2, cout = ws.n;
  const Index ho = (s.h + 2 * pad - k) / stride + 1;
  const Index wo = (s.w + 2 * pad - k) / stride + 1;
  const bool has_bias = !bias.value().empty();
  const Index kdim = s.c * k * k;

  Tensor<Scalar> out(Shape{s.n, cout, ho, wo});
  typename Tensor<Scalar>::ConstMatrixMap wmat(weight.value().data(), cout, kdim);
  RowMatrix<Scalar> col(kdim, ho * wo);
  for (Index i = 0; i < s.n; ++i) {
    detail::im2col(x.value().plane(i, 0), s.c, s.h, s.w, k, stride, pad, ho, wo, col.data());
    auto o = out.matrix(i);
    o.noalias() = wmat * col;
    if (has_bias) o.colwise() += bias.value().vec();
  }

  std::vector<Var<Scalar>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<Scalar>(
      std::move(out), inputs, [s, k, pad, stride, cout, ho, wo, kdim, has_bias](Node<Scalar>& n) {
        const auto& xin = input_value(n, 0);
        const auto& wv = input_value(n, 1);
        auto* gx = input_grad(n, 0);
        auto* gw = input_grad(n, 1);
        auto* gb = has_bias ? input_grad(n, 2) : nullptr;
        typename Tensor<Scalar>::ConstMatrixMap wmat(wv.data(), cout, kdim);
        RowMatrix<Scalar> col(kdim, ho * wo);
        for (Index i = 0; i < s.n; ++i) {
          auto go = n.grad.matrix(i);
          if (gb) gb->vec() += go.rowwise().sum();
          if (gw) {
            detail::im2col(xin.plane(i, 0), s.c, s.h, s.w, k, stride, pad, ho, wo, col.data());
            typename Tensor<Scalar>::MatrixMap gwm(gw->data(), cout, kdim);
            gwm.noalias() += go * col.transpose();
          }
          if (gx) {
            col.noalias() = wmat.transpose() * go;
            detail::col2im(col.data(), s.c, s.h, s.w, k, stride, pad, ho, wo, gx->plane(i, 0));
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Batch normalization

/// Per-channel batch normalization. In training mode the batch statistics are
/// used and the running estimates are updated in place (unbiased variance,
/// exponential average with the given momentum); otherwise the running
/// statistics normalize the input.
template <typename Scalar>
Var<Scalar> batch_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Tensor<Scalar>& running_mean, Tensor<Scalar>& running_var, bool training,
                       Scalar momentum = Scalar(0.1), Scalar eps = Scalar(1e-5)) {
  const Shape s = x.shape();
  const Index hw = s.h * s.w;
  const Index m = s.n * hw;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mu(s.c), inv_std(s.c);
  for (Index c = 0; c < s.c; ++c) {
    if (training) {
      Scalar acc = 0;
      for (Index i = 0; i < s.n; ++i)
        acc += Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(x.value().plane(i, c), hw).sum();
      const Scalar mean_c = acc / static_cast<Scalar>(m);
      Scalar sq = 0;
      for (Index i = 0; i < s.n; ++i)
        sq += (Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(x.value().plane(i, c), hw).array() -
               mean_c)
                  .square()
                  .sum();
      const Scalar var_c = sq / static_cast<Scalar>(m);
      mu[c] = mean_c;
      inv_std[c] = Scalar(1) / std::sqrt(var_c + eps);
      const Scalar unbiased = m > 1 ? sq / static_cast<Scalar>(m - 1) : var_c;
      running_mean[c] = (1 - momentum) * running_mean[c] + momentum * mean_c;
      running_var[c] = (1 - momentum) * running_var[c] + momentum * unbiased;
    } else {
      mu[c] = running_mean[c];
      inv_std[c] = Scalar(1) / std::sqrt(running_var[c] + eps);
    }
  }
  Tensor<Scalar> xhat(s), out(s);
  for (Index i = 0; i < s.n; ++i)
    for (Index c = 0; c < s.c; ++c) {
      const Scalar* src = x.value().plane(i, c);
      Scalar* xh = xhat.plane(i, c);
      Scalar* dst = out.plane(i, c);
      for (Index p = 0; p < hw; ++p) {
        xh[p] = (src[p] - mu[c]) * inv_std[c];
        dst[p] = gamma.value()[c] * xh[p] + beta.value()[c];
      }
    }
  return make_result<Scalar>(
      std::move(out), {x, gamma, beta},
      [s, hw, m, training, inv_std, xhat = std::move(xhat)](Node<Scalar>& n) {
        auto* gx = input_grad(n, 0);
        auto* gg = input_grad(n, 1);
        auto* gbeta = input_grad(n, 2);
        const auto& gamma_v = input_value(n, 1);
        for (Index c = 0; c < s.c; ++c) {
          Scalar sum_dy = 0, sum_dy_xhat = 0;
          for (Index i = 0; i < s.n; ++i) {
            const Scalar* dy = n.grad.plane(i, c);
            const Scalar* xh = xhat.plane(i, c);
            for (Index p = 0; p < hw; ++p) {
              sum_dy += dy[p];
              sum_dy_xhat += dy[p] * xh[p];
            }
          }
          if (gg) (*gg)[c] += sum_dy_xhat;
          if (gbeta) (*gbeta)[c] += sum_dy;
          if (!gx) continue;
          const Scalar k = gamma_v[c] * inv_std[c];
          for (Index i = 0; i < s.n; ++i) {
            const Scalar* dy = n.grad.plane(i, c);
            const Scalar* xh = xhat.plane(i, c);
            Scalar* dx = gx->plane(i, c);
            if (training) {
              const Scalar inv_m = Scalar(1) / static_cast<Scalar>(m);
              for (Index p = 0; p < hw; ++p)
                dx[p] += k * (dy[p] - inv_m * sum_dy - inv_m * xh[p] * sum_dy_xhat);
            } else {
              for (Index p = 0; p < hw; ++p) dx[p] += k * dy[p];
            }
          }
        }
      });
}

}  // namespace sdfa
