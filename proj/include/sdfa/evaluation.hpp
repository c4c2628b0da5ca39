#pragma once

#include "sdfa/data.hpp"
#include "sdfa/network.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdfa {

struct DepthMetrics {
  double abs_rel = 0;
  double sq_rel = 0;
  double rmse = 0;
  double log_rmse = 0;
  double a1 = 0;
  double a2 = 0;
  double a3 = 0;
  Index n_valid = 0;
};

class EmptyEvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Error and threshold-accuracy metrics over pixels with valid != 0 and
/// gt > 0. Both depths are clamped to [min_depth, depth_cap] first.
template <typename Scalar>
DepthMetrics compute_metrics(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt, const Tensor<Scalar>& valid,
                             double depth_cap = 80.0, double min_depth = 1e-3) {
  require_same_shape(pred.shape(), gt.shape(), "compute_metrics");
  require_same_shape(pred.shape(), valid.shape(), "compute_metrics");
  require(depth_cap > min_depth && min_depth > 0, "compute_metrics: need 0 < min_depth < depth_cap");
  double abs_rel = 0, sq_rel = 0, sq = 0, log_sq = 0;
  Index a1 = 0, a2 = 0, a3 = 0, n = 0;
  for (Index i = 0; i < pred.size(); ++i) {
    if (valid[i] == 0 || !(gt[i] > 0)) continue;
    const double g = std::clamp(static_cast<double>(gt[i]), min_depth, depth_cap);
    const double p = std::clamp(static_cast<double>(pred[i]), min_depth, depth_cap);
    const double diff = p - g;
    abs_rel += std::abs(diff) / g;
    sq_rel += diff * diff / g;
    sq += diff * diff;
    const double log_diff = std::log(p) - std::log(g);
    log_sq += log_diff * log_diff;
    const double ratio = std::max(p / g, g / p);
    a1 += ratio < 1.25;
    a2 += ratio < 1.25 * 1.25;
    a3 += ratio < 1.25 * 1.25 * 1.25;
    ++n;
  }
  if (n == 0) throw EmptyEvaluationError("compute_metrics: no valid pixels");
  const double inv = 1.0 / static_cast<double>(n);
  DepthMetrics m;
  m.abs_rel = abs_rel * inv;
  m.sq_rel = sq_rel * inv;
  m.rmse = std::sqrt(sq * inv);
  m.log_rmse = std::sqrt(log_sq * inv);
  m.a1 = static_cast<double>(a1) * inv;
  m.a2 = static_cast<double>(a2) * inv;
  m.a3 = static_cast<double>(a3) * inv;
  m.n_valid = n;
  return m;
}

/// Crop window of the Eigen evaluation protocol as [row0, row1) x [col0, col1).
struct CropWindow {
  Index row0, row1, col0, col1;
};

inline CropWindow garg_crop_window(Index h, Index w) {
  require(h > 0 && w > 0, "garg_crop: sizes must be positive");
  return {static_cast<Index>(0.40810811 * static_cast<double>(h)), static_cast<Index>(0.99189189 * static_cast<double>(h)),
          static_cast<Index>(0.03594771 * static_cast<double>(w)), static_cast<Index>(0.96405229 * static_cast<double>(w))};
}

/// 1x1xHxW map, 1 inside the crop window.
Tensor<float> garg_crop_mask(Index h, Index w);

/// Blends a prediction with the prediction for the mirrored input (already
/// mirrored back): the mean in the interior, the mirrored-input prediction
/// at the left border and the normal one at the right border, with linear
/// ramps over 5% of the width. The left border of a left-view prediction has
/// no stereo support, while the mirrored input moves it to the right.
template <typename Scalar>
Tensor<Scalar> post_process(const Tensor<Scalar>& normal, const Tensor<Scalar>& flipped_back) {
  require_same_shape(normal.shape(), flipped_back.shape(), "post_process");
  const Index w = normal.w();
  std::vector<Scalar> left_w(static_cast<std::size_t>(w)), right_w(static_cast<std::size_t>(w));
  for (Index x = 0; x < w; ++x) {
    const double l = w > 1 ? static_cast<double>(x) / static_cast<double>(w - 1) : 0.5;
    // Weight of the mirrored-input prediction near the left border.
    left_w[static_cast<std::size_t>(x)] = static_cast<Scalar>(1.0 - std::clamp(20.0 * (l - 0.05), 0.0, 1.0));
  }
  for (Index x = 0; x < w; ++x) right_w[static_cast<std::size_t>(x)] = left_w[static_cast<std::size_t>(w - 1 - x)];
  Tensor<Scalar> out(normal.shape());
  for (Index n = 0; n < normal.n(); ++n)
    for (Index c = 0; c < normal.c(); ++c)
      for (Index y = 0; y < normal.h(); ++y)
        for (Index x = 0; x < w; ++x) {
          const Scalar a = normal(n, c, y, x), b = flipped_back(n, c, y, x);
          const Scalar wl = left_w[static_cast<std::size_t>(x)], wr = right_w[static_cast<std::size_t>(x)];
          out(n, c, y, x) = wr * a + wl * b + (1 - wl - wr) * (a + b) / 2;
        }
  return out;
}

struct EvalOptions {
  bool post_process = false;
  bool garg_crop = true;
  double depth_cap = 80.0;
  double min_depth = 1e-3;
  /// Scales each prediction by median(gt) / median(pred). Off for stereo-trained models.
  bool median_scaling = false;
  PathSelector path = PathSelector::distilled;
  /// Decode mirrored features (the distilled inference path).
  bool flipped = true;
};

/// Pooled disparity-domain accuracy over all valid pixels.
struct DisparityStats {
  double median_abs_error = 0;
  double mean_abs_error = 0;
  double delta_1_25 = 0;
  Index n_valid = 0;
};

struct ImageMetrics {
  std::string id;
  DepthMetrics metrics;
};

struct EvaluationReport {
  DepthMetrics mean;
  std::vector<ImageMetrics> per_image;
  std::optional<DisparityStats> disparity;
};

/// Disparity (pixels) for one image, optionally blended with the prediction
/// for its mirror image.
Tensor<float> predict_disparity(const DepthNet<float>& net, const Tensor<float>& image, const EvalOptions& options);

/// Metric depth for one image (distilled flipped path unless options say otherwise).
Tensor<float> predict_depth(const DepthNet<float>& net, const Tensor<float>& image, const CameraRig& rig,
                            const EvalOptions& options);

/// Predicts every sample, crops, caps and averages per-image metrics. When
/// samples carry disparity, pooled disparity statistics are added.
EvaluationReport evaluate_model(const DepthNet<float>& net, const SampleSource& samples, const EvalOptions& options);

/// Accumulates disparity errors over many images.
class DisparityAccumulator {
 public:
  void add(const Tensor<float>& pred, const Tensor<float>& gt, const Tensor<float>& valid);
  DisparityStats finish() const;

 private:
  std::vector<double> abs_errors_;
  Index within_ = 0;
};

void write_metrics_csv(const std::filesystem::path& path, const EvaluationReport& report);
void write_summary_json(const std::filesystem::path& path, const EvaluationReport& report, const EvalOptions& options);

/// Per-stage mean offset norms of one image, finest stage first.
struct StageOffsetNorms {
  Index stage = 0;
  std::optional<double> delta_f;
  std::optional<double> delta_c1;
  std::optional<double> delta_c2;
};

std::vector<StageOffsetNorms> offset_norms(const DecoderTrace<float>& trace);

/// Colors an N x 2 x H x W offset map (first sample): hue follows the
/// direction, saturation the norm relative to the map maximum.
Tensor<float> offset_color_map(const Tensor<float>& delta);

/// Maps depth to a perceptual color ramp on inverse depth.
Tensor<float> depth_color_map(const Tensor<float>& depth);

}  // namespace sdfa
