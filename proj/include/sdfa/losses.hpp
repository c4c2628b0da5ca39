#pragma once

#include "sdfa/layers.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>

namespace sdfa {

struct LossWeights {
  double lambda1 = 0.0008;  // raw smoothness
  double lambda2 = 0.01;    // self-distillation
  double lambda3 = 0.0016;  // distilled smoothness
  double beta = 0.01;       // perceptual term inside the synthesis loss
  double gamma = 2.0;       // edge-awareness of the smoothness terms
  /// First epoch (0-based) at which the distilled pass and its losses run.
  std::int64_t sd_start_epoch = 25;

  void validate() const {
    require(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0 && beta >= 0 && gamma >= 0,
            "LossWeights: weights must be non-negative");
    require(sd_start_epoch >= 0, "LossWeights: sd_start_epoch must be non-negative");
  }

  bool distillation_active(std::int64_t epoch) const { return epoch >= sd_start_epoch; }
};

/// Frozen feature pyramid for the perceptual term: three stages of 3x3 ELU
/// convolution followed by 2x2 average pooling; phi_i is the i-th pooled map.
/// Weights are drawn once from a fixed seed and never trained.
template <typename Scalar>
class PerceptualExtractor {
 public:
  explicit PerceptualExtractor(std::uint64_t seed = 7, std::array<Index, 3> channels = {8, 16, 32}) {
    Rng rng(seed);
    Index in = 3;
    for (std::size_t s = 0; s < 3; ++s) {
      stages_[s] = Conv2d<Scalar>(in, channels[s], 3, 1, rng);
      stages_[s].weight = Var<Scalar>(stages_[s].weight.value(), false);
      stages_[s].bias = Var<Scalar>(stages_[s].bias.value(), false);
      in = channels[s];
    }
  }

  std::array<Var<Scalar>, 3> operator()(const Var<Scalar>& image) const {
    std::array<Var<Scalar>, 3> phi;
    Var<Scalar> x = image;
    for (std::size_t s = 0; s < 3; ++s) {
      x = avg_pool2x(elu(stages_[s](x)));
      phi[s] = x;
    }
    return phi;
  }

 private:
  std::array<Conv2d<Scalar>, 3> stages_;
};

/// mean |pred - real| + beta * sum_i mean_p ||phi_i(pred)(p) - phi_i(real)(p)||_2.
/// The real image is a constant target.
template <typename Scalar>
Var<Scalar> synthesis_loss(const Var<Scalar>& pred, const Tensor<Scalar>& real,
                           const PerceptualExtractor<Scalar>& extractor, double beta) {
  require_same_shape(pred.shape(), real.shape(), "synthesis_loss");
  Var<Scalar> target(real);
  Var<Scalar> loss = mean(abs(sub(pred, target)));
  if (beta == 0) return loss;
  std::array<Var<Scalar>, 3> phi_real;
  {
    NoGradGuard no_grad;
    phi_real = extractor(target);
  }
  const auto phi_pred = extractor(pred);
  std::vector<std::pair<Var<Scalar>, Scalar>> terms{{loss, Scalar(1)}};
  for (std::size_t i = 0; i < 3; ++i)
    terms.emplace_back(mean(channel_l2_norm(sub(phi_pred[i], phi_real[i]))), static_cast<Scalar>(beta));
  return weighted_sum(terms);
}

/// Masked L1 between distilled and raw depth, normalized by the total pixel
/// count. The raw depth is detached.
template <typename Scalar>
Var<Scalar> self_distilled_loss(const Var<Scalar>& depth_distilled, const Var<Scalar>& depth_raw,
                                const Tensor<Scalar>& m_photo, const Tensor<Scalar>& m_visible) {
  require_same_shape(depth_distilled.shape(), depth_raw.shape(), "self_distilled_loss");
  require_same_shape(depth_distilled.shape(), m_photo.shape(), "self_distilled_loss");
  require_same_shape(depth_distilled.shape(), m_visible.shape(), "self_distilled_loss");
  Tensor<Scalar> mask(m_photo.shape());
  mask.vec() = m_photo.vec().cwiseProduct(m_visible.vec());
  return mean(mul(abs(sub(depth_distilled, depth_raw.detach())), Var<Scalar>(std::move(mask))));
}

/// Edge-aware first-order smoothness with forward differences:
/// mean |dx d| exp(-gamma |dx I|) + mean |dy d| exp(-gamma |dy I|), image
/// gradients averaged over channels. The image is a constant.
template <typename Scalar>
Var<Scalar> smoothness_loss(const Var<Scalar>& disparity, const Tensor<Scalar>& image, double gamma) {
  const Shape ds = disparity.shape();
  const Shape is = image.shape();
  require(ds.c == 1 && ds.n == is.n && ds.h == is.h && ds.w == is.w,
          "smoothness_loss: disparity " + ds.str() + " does not match image " + is.str());
  const Index h = ds.h, w = ds.w;
  Tensor<Scalar> wx(Shape{ds.n, 1, h, std::max<Index>(w - 1, 0)});
  Tensor<Scalar> wy(Shape{ds.n, 1, std::max<Index>(h - 1, 0), w});
  for (Index i = 0; i < ds.n; ++i) {
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x + 1 < w; ++x) {
        Scalar g = 0;
        for (Index c = 0; c < is.c; ++c) g += std::abs(image(i, c, y, x + 1) - image(i, c, y, x));
        wx(i, 0, y, x) = std::exp(-static_cast<Scalar>(gamma) * g / static_cast<Scalar>(is.c));
      }
    for (Index y = 0; y + 1 < h; ++y)
      for (Index x = 0; x < w; ++x) {
        Scalar g = 0;
        for (Index c = 0; c < is.c; ++c) g += std::abs(image(i, c, y + 1, x) - image(i, c, y, x));
        wy(i, 0, y, x) = std::exp(-static_cast<Scalar>(gamma) * g / static_cast<Scalar>(is.c));
      }
  }
  const Scalar inv_x = wx.size() > 0 ? Scalar(1) / static_cast<Scalar>(wx.size()) : Scalar(0);
  const Scalar inv_y = wy.size() > 0 ? Scalar(1) / static_cast<Scalar>(wy.size()) : Scalar(0);
  Scalar total_x = 0, total_y = 0;
  const auto& d = disparity.value();
  for (Index i = 0; i < ds.n; ++i) {
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x + 1 < w; ++x) total_x += std::abs(d(i, 0, y, x + 1) - d(i, 0, y, x)) * wx(i, 0, y, x);
    for (Index y = 0; y + 1 < h; ++y)
      for (Index x = 0; x < w; ++x) total_y += std::abs(d(i, 0, y + 1, x) - d(i, 0, y, x)) * wy(i, 0, y, x);
  }
  Tensor<Scalar> out(Shape{1, 1, 1, 1});
  out[0] = total_x * inv_x + total_y * inv_y;
  return make_result<Scalar>(
      std::move(out), {disparity},
      [ds, h, w, inv_x, inv_y, wx = std::move(wx), wy = std::move(wy)](Node<Scalar>& n) {
        auto* g = input_grad(n, 0);
        if (!g) return;
        const auto& d = input_value(n, 0);
        const Scalar go = n.grad[0];
        auto sign = [](Scalar v) { return v > 0 ? Scalar(1) : (v < 0 ? Scalar(-1) : Scalar(0)); };
        for (Index i = 0; i < ds.n; ++i) {
          for (Index y = 0; y < h; ++y)
            for (Index x = 0; x + 1 < w; ++x) {
              const Scalar k = go * inv_x * wx(i, 0, y, x) * sign(d(i, 0, y, x + 1) - d(i, 0, y, x));
              (*g)(i, 0, y, x + 1) += k;
              (*g)(i, 0, y, x) -= k;
            }
          for (Index y = 0; y + 1 < h; ++y)
            for (Index x = 0; x < w; ++x) {
              const Scalar k = go * inv_y * wy(i, 0, y, x) * sign(d(i, 0, y + 1, x) - d(i, 0, y, x));
              (*g)(i, 0, y + 1, x) += k;
              (*g)(i, 0, y, x) -= k;
            }
        }
      });
}

/// The four loss terms of one training step; the distilled terms are absent
/// when the distilled pass did not run.
template <typename Scalar>
struct LossTerms {
  Var<Scalar> synthesis;
  Var<Scalar> smooth_raw;
  std::optional<Var<Scalar>> self_distilled;
  std::optional<Var<Scalar>> smooth_distilled;
};

/// L_syn + lambda1 L_smo+ + lambda2 L_sd + lambda3 L_smo^d, with the last two
/// weights forced to zero before the distillation start epoch.
template <typename Scalar>
Var<Scalar> total_loss(const LossTerms<Scalar>& terms, const LossWeights& weights, std::int64_t epoch) {
  require(epoch >= 0, "total_loss: epoch must be non-negative");
  std::vector<std::pair<Var<Scalar>, Scalar>> parts{
      {terms.synthesis, Scalar(1)}, {terms.smooth_raw, static_cast<Scalar>(weights.lambda1)}};
  if (weights.distillation_active(epoch)) {
    if (terms.self_distilled) parts.emplace_back(*terms.self_distilled, static_cast<Scalar>(weights.lambda2));
    if (terms.smooth_distilled) parts.emplace_back(*terms.smooth_distilled, static_cast<Scalar>(weights.lambda3));
  }
  return weighted_sum(parts);
}

}  // namespace sdfa
