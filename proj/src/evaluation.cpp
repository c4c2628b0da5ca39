#include "sdfa/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <iomanip>
#include <numbers>

namespace sdfa {

Tensor<float> garg_crop_mask(Index h, Index w) {
  const CropWindow c = garg_crop_window(h, w);
  Tensor<float> mask(Shape{1, 1, h, w});
  for (Index y = c.row0; y < c.row1; ++y)
    for (Index x = c.col0; x < c.col1; ++x) mask(0, 0, y, x) = 1.0f;
  return mask;
}

namespace {

Tensor<float> raw_disparity(const DepthNet<float>& net, const Tensor<float>& image, const EvalOptions& o) {
  return net.infer_disparity(image, o.path, o.flipped);
}

Tensor<float> to_depth(const Tensor<float>& disparity, const CameraRig& rig) {
  Tensor<float> depth(disparity.shape());
  const double bf = rig.bf();
  for (Index i = 0; i < depth.size(); ++i) depth[i] = static_cast<float>(bf / disparity[i]);
  return depth;
}

double median(std::vector<double> v) {
  require(!v.empty(), "median of an empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid))) / 2;
  }
  return m;
}

}  // namespace

Tensor<float> predict_disparity(const DepthNet<float>& net, const Tensor<float>& image, const EvalOptions& options) {
  Tensor<float> disp = raw_disparity(net, image, options);
  if (!options.post_process) return disp;
  const Tensor<float> mirrored = flip_width(raw_disparity(net, flip_width(image), options));
  return post_process(disp, mirrored);
}

Tensor<float> predict_depth(const DepthNet<float>& net, const Tensor<float>& image, const CameraRig& rig,
                            const EvalOptions& options) {
  rig.validate();
  Tensor<float> depth = to_depth(raw_disparity(net, image, options), rig);
  if (!options.post_process) return depth;
  const Tensor<float> mirrored = flip_width(to_depth(raw_disparity(net, flip_width(image), options), rig));
  return post_process(depth, mirrored);
}

void DisparityAccumulator::add(const Tensor<float>& pred, const Tensor<float>& gt, const Tensor<float>& valid) {
  require_same_shape(pred.shape(), gt.shape(), "DisparityAccumulator");
  require_same_shape(pred.shape(), valid.shape(), "DisparityAccumulator");
  for (Index i = 0; i < pred.size(); ++i) {
    if (valid[i] == 0 || !(gt[i] > 0)) continue;
    const double p = pred[i], g = gt[i];
    abs_errors_.push_back(std::abs(p - g));
    if (p > 0 && std::max(p / g, g / p) < 1.25) ++within_;
  }
}

DisparityStats DisparityAccumulator::finish() const {
  if (abs_errors_.empty()) throw EmptyEvaluationError("disparity statistics: no valid pixels");
  DisparityStats s;
  s.n_valid = static_cast<Index>(abs_errors_.size());
  s.median_abs_error = median(abs_errors_);
  double total = 0;
  for (double e : abs_errors_) total += e;
  s.mean_abs_error = total / static_cast<double>(s.n_valid);
  s.delta_1_25 = static_cast<double>(within_) / static_cast<double>(s.n_valid);
  return s;
}

EvaluationReport evaluate_model(const DepthNet<float>& net, const SampleSource& samples, const EvalOptions& options) {
  if (samples.size() == 0) throw EmptyEvaluationError("evaluate_model: no samples");
  EvaluationReport report;
  DisparityAccumulator disp_acc;
  bool any_disparity = false;
  std::array<double, 7> sums{};
  for (Index i = 0; i < samples.size(); ++i) {
    const StereoSample s = samples.get(i);
    const Tensor<float> gt = ground_truth_depth(s);
    if (gt.h() != s.left.h() || gt.w() != s.left.w())
      throw DataLoadError("sample '" + s.id + "': ground truth size differs from the image");
    const Tensor<float> disp = predict_disparity(net, s.left, options);
    Tensor<float> depth = to_depth(disp, s.rig);
    if (options.post_process) depth = predict_depth(net, s.left, s.rig, options);
    Tensor<float> valid = options.garg_crop ? garg_crop_mask(gt.h(), gt.w()) : Tensor<float>(gt.shape());
    if (!options.garg_crop) valid.fill(1.0f);
    if (options.median_scaling) {
      std::vector<double> p, g;
      for (Index k = 0; k < gt.size(); ++k)
        if (valid[k] != 0 && gt[k] > 0) {
          p.push_back(depth[k]);
          g.push_back(gt[k]);
        }
      if (!p.empty()) depth.vec() *= static_cast<float>(median(g) / median(p));
    }
    const DepthMetrics m = compute_metrics(depth, gt, valid, options.depth_cap, options.min_depth);
    report.per_image.push_back({s.id, m});
    const std::array<double, 7> vals{m.abs_rel, m.sq_rel, m.rmse, m.log_rmse, m.a1, m.a2, m.a3};
    for (std::size_t k = 0; k < 7; ++k) sums[k] += vals[k];
    report.mean.n_valid += m.n_valid;
    if (s.disparity) {
      any_disparity = true;
      disp_acc.add(disp, *s.disparity, valid);
    }
  }
  const double inv = 1.0 / static_cast<double>(report.per_image.size());
  report.mean.abs_rel = sums[0] * inv;
  report.mean.sq_rel = sums[1] * inv;
  report.mean.rmse = sums[2] * inv;
  report.mean.log_rmse = sums[3] * inv;
  report.mean.a1 = sums[4] * inv;
  report.mean.a2 = sums[5] * inv;
  report.mean.a3 = sums[6] * inv;
  if (any_disparity) report.disparity = disp_acc.finish();
  return report;
}

void write_metrics_csv(const std::filesystem::path& path, const EvaluationReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << std::setprecision(9);
  out << "id,abs_rel,sq_rel,rmse,log_rmse,a1,a2,a3,n_valid\n";
  auto row = [&](const std::string& id, const DepthMetrics& m) {
    out << id << "," << m.abs_rel << "," << m.sq_rel << "," << m.rmse << "," << m.log_rmse << "," << m.a1 << ","
        << m.a2 << "," << m.a3 << "," << m.n_valid << "\n";
  };
  for (const auto& im : report.per_image) row(im.id, im.metrics);
  row("mean", report.mean);
}

void write_summary_json(const std::filesystem::path& path, const EvaluationReport& report, const EvalOptions& options) {
  nlohmann::json j;
  j["images"] = report.per_image.size();
  j["metrics"] = {{"abs_rel", report.mean.abs_rel}, {"sq_rel", report.mean.sq_rel}, {"rmse", report.mean.rmse},
                  {"log_rmse", report.mean.log_rmse}, {"a1", report.mean.a1},         {"a2", report.mean.a2},
                  {"a3", report.mean.a3},             {"n_valid", report.mean.n_valid}};
  if (report.disparity)
    j["disparity"] = {{"median_abs_error", report.disparity->median_abs_error},
                      {"mean_abs_error", report.disparity->mean_abs_error},
                      {"delta_1_25", report.disparity->delta_1_25},
                      {"n_valid", report.disparity->n_valid}};
  j["protocol"] = {{"post_process", options.post_process}, {"garg_crop", options.garg_crop},
                   {"depth_cap", options.depth_cap},       {"min_depth", options.min_depth},
                   {"median_scaling", options.median_scaling}, {"path", to_string(options.path)},
                   {"flipped", options.flipped}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

std::vector<StageOffsetNorms> offset_norms(const DecoderTrace<float>& trace) {
  std::vector<StageOffsetNorms> out;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    StageOffsetNorms s;
    s.stage = static_cast<Index>(i + 1);
    const auto& t = trace[i];
    if (t.delta_f) s.delta_f = offset_norm_stats<float>({*t.delta_f}).front();
    if (t.delta_c1) s.delta_c1 = offset_norm_stats<float>({*t.delta_c1}).front();
    if (t.delta_c2) s.delta_c2 = offset_norm_stats<float>({*t.delta_c2}).front();
    out.push_back(s);
  }
  return out;
}

namespace {

std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

}  // namespace

Tensor<float> offset_color_map(const Tensor<float>& delta) {
  require(delta.n() >= 1 && delta.c() == 2, "offset_color_map: expected an N x 2 x H x W offset map");
  const Index hw = delta.h() * delta.w();
  const float* dx = delta.plane(0, 0);
  const float* dy = delta.plane(0, 1);
  double max_norm = 0;
  for (Index p = 0; p < hw; ++p) max_norm = std::max(max_norm, std::hypot<double>(dx[p], dy[p]));
  Tensor<float> out(Shape{1, 3, delta.h(), delta.w()});
  for (Index p = 0; p < hw; ++p) {
    const double norm = std::hypot<double>(dx[p], dy[p]);
    const double hue = (std::atan2(dy[p], dx[p]) + std::numbers::pi) / (2 * std::numbers::pi);
    const double sat = max_norm > 0 ? norm / max_norm : 0.0;
    const auto rgb = hsv_to_rgb(hue, sat, 1.0);
    for (Index c = 0; c < 3; ++c) out.plane(0, c)[p] = rgb[static_cast<std::size_t>(c)];
  }
  return out;
}

Tensor<float> depth_color_map(const Tensor<float>& depth) {
  require(depth.n() == 1 && depth.c() == 1, "depth_color_map: expected a 1x1xHxW depth map");
  // Dark purple (far) through red and orange to pale yellow (near).
  static constexpr std::array<std::array<float, 3>, 5> stops{{{0.00f, 0.00f, 0.02f},
                                                              {0.32f, 0.07f, 0.43f},
                                                              {0.72f, 0.21f, 0.47f},
                                                              {0.98f, 0.55f, 0.35f},
                                                              {0.99f, 0.99f, 0.75f}}};
  float lo = std::numeric_limits<float>::infinity(), hi = 0;
  for (Index i = 0; i < depth.size(); ++i)
    if (depth[i] > 0 && std::isfinite(depth[i])) {
      lo = std::min(lo, 1.0f / depth[i]);
      hi = std::max(hi, 1.0f / depth[i]);
    }
  Tensor<float> out(Shape{1, 3, depth.h(), depth.w()});
  const Index hw = depth.h() * depth.w();
  for (Index p = 0; p < hw; ++p) {
    float t = 0;
    if (depth[p] > 0 && std::isfinite(depth[p]) && hi > lo) t = (1.0f / depth[p] - lo) / (hi - lo);
    const float pos = std::clamp(t, 0.0f, 1.0f) * static_cast<float>(stops.size() - 1);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(pos), stops.size() - 2);
    const float f = pos - static_cast<float>(k);
    for (std::size_t c = 0; c < 3; ++c)
      out.plane(0, static_cast<Index>(c))[p] = (1 - f) * stops[k][c] + f * stops[k + 1][c];
  }
  return out;
}

}  // namespace sdfa
