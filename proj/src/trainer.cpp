#include "sdfa/trainer.hpp"

#include "sdfa/checkpoint.hpp"
#include "sdfa/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace sdfa {

void AugmentationConfig::validate() const {
  require(resize_range.first > 0 && resize_range.second >= resize_range.first,
          "AugmentationConfig: resize range must be positive and ordered");
  require(crop_hw.first > 0 && crop_hw.second > 0, "AugmentationConfig: crop size must be positive");
  require(hflip_prob >= 0 && hflip_prob <= 1, "AugmentationConfig: hflip_prob must lie in [0, 1]");
  require(brightness >= 0 && contrast >= 0 && saturation >= 0 && hue >= 0,
          "AugmentationConfig: jitter ranges must be non-negative");
  require(brightness < 1 && contrast < 1 && saturation < 1 && hue <= 0.5,
          "AugmentationConfig: jitter ranges too large");
}

void TrainConfig::validate() const {
  require(epochs > 0, "TrainConfig: epochs must be positive");
  require(batch_size > 0, "TrainConfig: batch_size must be positive");
  require(lr > 0, "TrainConfig: lr must be positive");
  for (Index e : lr_halve_epochs) require(e >= 0, "TrainConfig: halving epochs must be non-negative");
  require(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1,
          "TrainConfig: Adam betas must lie in [0, 1)");
  require(adam_eps > 0, "TrainConfig: adam_eps must be positive");
  require(offset_lr_scale >= 0, "TrainConfig: offset_lr_scale must be non-negative");
  require(checkpoint_every >= 0, "TrainConfig: checkpoint_every must be non-negative");
  weights.validate();
  thresholds.validate();
  network.validate();
  aug.validate();
}

TrainConfig paper_profile() { return TrainConfig{}; }

TrainConfig desk_profile() {
  TrainConfig c;
  c.epochs = 20;
  c.batch_size = 4;
  c.lr = 1e-3;
  c.lr_halve_epochs = {10, 13, 15, 17, 19};
  c.weights.sd_start_epoch = 10;
  c.network.backbone.stage_channels = {16, 32, 64, 128};
  c.network.decoder_widths = {16, 32, 64};
  c.network.restoration_channels = {16, 16};
  c.network.d_min = 2.0;
  c.network.d_max = 40.0;
  c.network.levels = 17;
  c.aug.resize_range = {1.0, 1.0};
  c.aug.crop_hw = {96, 320};
  c.aug.brightness = 0;
  c.aug.contrast = 0;
  c.aug.saturation = 0;
  c.aug.hue = 0;
  c.checkpoint_every = 5;
  return c;
}

double lr_schedule(std::int64_t epoch, const TrainConfig& config) {
  require(epoch >= 0, "lr_schedule: epoch must be non-negative");
  double lr = config.lr;
  for (Index e : config.lr_halve_epochs)
    if (e <= epoch) lr *= 0.5;
  return lr;
}

// ---------------------------------------------------------------------------
// Augmentation

Tensor<float> resize_bilinear(const Tensor<float>& in, Index h, Index w) {
  require(h > 0 && w > 0, "resize_bilinear: target size must be positive");
  if (in.h() == h && in.w() == w) return in;
  Tensor<float> out(Shape{in.n(), in.c(), h, w});
  const double sy = static_cast<double>(in.h()) / static_cast<double>(h);
  const double sx = static_cast<double>(in.w()) / static_cast<double>(w);
  auto tap = [](double src, Index len, Index& i0, Index& i1, float& f) {
    src = std::clamp(src, 0.0, static_cast<double>(len - 1));
    i0 = static_cast<Index>(std::floor(src));
    i1 = std::min(i0 + 1, len - 1);
    f = static_cast<float>(src - static_cast<double>(i0));
  };
  for (Index n = 0; n < in.n(); ++n)
    for (Index c = 0; c < in.c(); ++c) {
      const float* src = in.plane(n, c);
      float* dst = out.plane(n, c);
      for (Index y = 0; y < h; ++y) {
        Index y0, y1;
        float fy;
        tap((static_cast<double>(y) + 0.5) * sy - 0.5, in.h(), y0, y1, fy);
        for (Index x = 0; x < w; ++x) {
          Index x0, x1;
          float fx;
          tap((static_cast<double>(x) + 0.5) * sx - 0.5, in.w(), x0, x1, fx);
          const float top = (1 - fx) * src[y0 * in.w() + x0] + fx * src[y0 * in.w() + x1];
          const float bot = (1 - fx) * src[y1 * in.w() + x0] + fx * src[y1 * in.w() + x1];
          dst[y * w + x] = (1 - fy) * top + fy * bot;
        }
      }
    }
  return out;
}

namespace {

Tensor<float> resize_nearest(const Tensor<float>& in, Index h, Index w) {
  if (in.h() == h && in.w() == w) return in;
  Tensor<float> out(Shape{in.n(), in.c(), h, w});
  for (Index n = 0; n < in.n(); ++n)
    for (Index c = 0; c < in.c(); ++c)
      for (Index y = 0; y < h; ++y) {
        const Index sy = std::min(in.h() - 1, static_cast<Index>((static_cast<double>(y) + 0.5) * in.h() / h));
        for (Index x = 0; x < w; ++x) {
          const Index sx = std::min(in.w() - 1, static_cast<Index>((static_cast<double>(x) + 0.5) * in.w() / w));
          out(n, c, y, x) = in(n, c, sy, sx);
        }
      }
  return out;
}

Tensor<float> crop(const Tensor<float>& in, Index y0, Index x0, Index h, Index w) {
  if (y0 == 0 && x0 == 0 && in.h() == h && in.w() == w) return in;
  Tensor<float> out(Shape{in.n(), in.c(), h, w});
  for (Index n = 0; n < in.n(); ++n)
    for (Index c = 0; c < in.c(); ++c)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) out(n, c, y, x) = in(n, c, y0 + y, x0 + x);
  return out;
}

struct Jitter {
  float brightness = 1, contrast = 1, saturation = 1, hue = 0;
  bool identity() const { return brightness == 1 && contrast == 1 && saturation == 1 && hue == 0; }
};

float luma(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

void apply_jitter(Tensor<float>& img, const Jitter& j, float contrast_mean) {
  const Index hw = img.h() * img.w();
  float* r = img.plane(0, 0);
  float* g = img.plane(0, 1);
  float* b = img.plane(0, 2);
  const float cos_h = std::cos(2 * std::numbers::pi_v<float> * j.hue);
  const float sin_h = std::sin(2 * std::numbers::pi_v<float> * j.hue);
  for (Index p = 0; p < hw; ++p) {
    float cr = r[p] * j.brightness, cg = g[p] * j.brightness, cb = b[p] * j.brightness;
    cr = (cr - contrast_mean) * j.contrast + contrast_mean;
    cg = (cg - contrast_mean) * j.contrast + contrast_mean;
    cb = (cb - contrast_mean) * j.contrast + contrast_mean;
    const float gray = luma(cr, cg, cb);
    cr = (cr - gray) * j.saturation + gray;
    cg = (cg - gray) * j.saturation + gray;
    cb = (cb - gray) * j.saturation + gray;
    if (j.hue != 0) {
      // Rotate chroma in YIQ space.
      const float y = 0.299f * cr + 0.587f * cg + 0.114f * cb;
      const float i = 0.596f * cr - 0.274f * cg - 0.322f * cb;
      const float q = 0.211f * cr - 0.523f * cg + 0.312f * cb;
      const float i2 = i * cos_h - q * sin_h;
      const float q2 = i * sin_h + q * cos_h;
      cr = y + 0.956f * i2 + 0.621f * q2;
      cg = y - 0.272f * i2 - 0.647f * q2;
      cb = y - 1.106f * i2 + 1.703f * q2;
    }
    r[p] = std::clamp(cr, 0.0f, 1.0f);
    g[p] = std::clamp(cg, 0.0f, 1.0f);
    b[p] = std::clamp(cb, 0.0f, 1.0f);
  }
}

}  // namespace

StereoSample augment(const StereoSample& sample, const AugmentationConfig& cfg, Rng& rng) {
  cfg.validate();
  require(sample.left.n() == 1 && sample.left.c() == 3, "augment: expected 1x3xHxW views");
  require_same_shape(sample.left.shape(), sample.right.shape(), "augment");
  // Every draw happens regardless of the settings so the stream stays aligned.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto symmetric = [&](double range) { return static_cast<float>(1.0 + range * (2.0 * unit(rng) - 1.0)); };
  const double scale = cfg.resize_range.first + (cfg.resize_range.second - cfg.resize_range.first) * unit(rng);
  const double u_y = unit(rng), u_x = unit(rng);
  const bool flip = unit(rng) < cfg.hflip_prob;
  Jitter jitter;
  jitter.brightness = symmetric(cfg.brightness);
  jitter.contrast = symmetric(cfg.contrast);
  jitter.saturation = symmetric(cfg.saturation);
  jitter.hue = static_cast<float>(cfg.hue * (2.0 * unit(rng) - 1.0));

  const Index h = std::max<Index>(1, std::llround(static_cast<double>(sample.left.h()) * scale));
  const Index w = std::max<Index>(1, std::llround(static_cast<double>(sample.left.w()) * scale));
  const auto [ch, cw] = cfg.crop_hw;
  require(ch <= h && cw <= w, "augment: crop " + std::to_string(ch) + "x" + std::to_string(cw) +
                                  " exceeds the resized image " + std::to_string(h) + "x" + std::to_string(w));
  const Index y0 = std::min(h - ch, static_cast<Index>(u_y * static_cast<double>(h - ch + 1)));
  const Index x0 = std::min(w - cw, static_cast<Index>(u_x * static_cast<double>(w - cw + 1)));

  StereoSample out;
  out.id = sample.id;
  out.rig = sample.rig;
  out.left = crop(resize_bilinear(sample.left, h, w), y0, x0, ch, cw);
  out.right = crop(resize_bilinear(sample.right, h, w), y0, x0, ch, cw);
  const float width_ratio = static_cast<float>(w) / static_cast<float>(sample.left.w());
  if (sample.disparity) {
    Tensor<float> d = crop(resize_nearest(*sample.disparity, h, w), y0, x0, ch, cw);
    d.vec() *= width_ratio;
    out.disparity = std::move(d);
  }
  if (sample.depth) out.depth = crop(resize_nearest(*sample.depth, h, w), y0, x0, ch, cw);
  if (sample.occluded) out.occluded = crop(resize_nearest(*sample.occluded, h, w), y0, x0, ch, cw);
  if (flip) out = flip_pair(out);
  if (!jitter.identity()) {
    const Index hw = out.left.h() * out.left.w();
    double total = 0;
    for (Index p = 0; p < hw; ++p)
      total += luma(out.left.plane(0, 0)[p], out.left.plane(0, 1)[p], out.left.plane(0, 2)[p]);
    const float mean = static_cast<float>(total / static_cast<double>(hw)) * jitter.brightness;
    apply_jitter(out.left, jitter, mean);
    apply_jitter(out.right, jitter, mean);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimization

void Adam::step(ParameterSet<float>& params, double lr, double offset_lr_scale) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float base_step = static_cast<float>(lr / bc1);
  const float offset_step = static_cast<float>(lr * offset_lr_scale / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float eps = static_cast<float>(eps_);
  for (auto& p : params.params) {
    if (!p.var->has_grad()) continue;
    const float step = p.name.find(".branch_") != std::string::npos ? offset_step : base_step;
    const auto g = p.var->grad().vec().array();
    Tensor<float>& m = m_[p.name];
    Tensor<float>& v = v_[p.name];
    if (m.empty()) m = Tensor<float>(p.var->shape());
    if (v.empty()) v = Tensor<float>(p.var->shape());
    m.vec().array() = b1 * m.vec().array() + (1 - b1) * g;
    v.vec().array() = b2 * v.vec().array() + (1 - b2) * g.square();
    p.var->mutable_value().vec().array() -= step * m.vec().array() / (v.vec().array().sqrt() * inv_sqrt_bc2 + eps);
  }
}

namespace {

Tensor<float> ones_like(const Tensor<float>& t) {
  Tensor<float> out(t.shape());
  out.fill(1.0f);
  return out;
}

std::string numeric_dump(const StepResult& r, DepthNet<float>& net) {
  nlohmann::json j;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  };
  j["synthesis"] = num(r.synthesis);
  j["smooth_raw"] = num(r.smooth_raw);
  if (r.self_distilled) j["self_distilled"] = num(*r.self_distilled);
  if (r.smooth_distilled) j["smooth_distilled"] = num(*r.smooth_distilled);
  j["total"] = num(r.total);
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : net.parameters().params) {
    const auto& v = p.var->value();
    params.push_back({{"name", p.name},
                      {"finite", v.all_finite()},
                      {"max_abs", v.size() > 0 && v.all_finite() ? static_cast<double>(v.vec().cwiseAbs().maxCoeff())
                                                                  : 0.0}});
  }
  j["parameters"] = params;
  return j.dump(2);
}

}  // namespace

StepResult training_step(DepthNet<float>& net, const std::vector<StereoSample>& batch, const TrainConfig& config,
                         std::int64_t epoch, Adam& optimizer, const PerceptualExtractor<float>& extractor) {
  require(!batch.empty(), "training_step: empty batch");
  require(net.loaded(), "training_step: model is not initialized");
  std::vector<Tensor<float>> lefts, rights;
  const CameraRig rig = batch.front().rig;
  for (const auto& s : batch) {
    require(s.rig.baseline == rig.baseline && s.rig.focal_x == rig.focal_x,
            "training_step: all samples of a batch must share one rig");
    lefts.push_back(s.left);
    rights.push_back(s.right);
  }
  const Tensor<float> left_t = stack(lefts);
  const Tensor<float> right_t = stack(rights);
  const DisparityLevels& levels = net.levels();

  auto params = net.parameters();
  for (auto& p : params.params) p.var->zero_grad();
  net.set_training(true);

  StepResult result;
  result.epoch = epoch;
  result.lr = lr_schedule(epoch, config);

  // (1) Self-supervised pass.
  Var<float> left(left_t);
  const auto features = net.encode(left);
  const Var<float> volume_raw = net.decode(features, PathSelector::raw);
  result.decoder_passes = 1;
  auto require_finite = [&](const Var<float>& volume) {
    if (volume.value().all_finite()) return;
    result.synthesis = result.smooth_raw = result.total = std::numeric_limits<double>::quiet_NaN();
    throw NumericError("non-finite network output at epoch " + std::to_string(epoch), numeric_dump(result, net));
  };
  require_finite(volume_raw);
  LossTerms<float> terms;
  terms.synthesis = synthesis_loss(synthesize_right(volume_raw, left, levels), right_t, extractor, config.weights.beta);
  const Var<float> disp_raw = volume_to_disparity(volume_raw, levels);
  terms.smooth_raw = smoothness_loss(disp_raw, left_t, config.weights.gamma);

  // (2) Self-distilled pass.
  if (config.weights.distillation_active(epoch)) {
    const Var<float> volume_d = config.distill.flip ? net.decode_flipped(features, PathSelector::distilled)
                                                    : net.decode(features, PathSelector::distilled);
    result.decoder_passes = 2;
    require_finite(volume_d);
    const Var<float> disp_d = volume_to_disparity(volume_d, levels);
    const Var<float> depth_d = disparity_to_depth(disp_d, rig);
    Tensor<float> depth_r, m_photo, m_visible;
    {
      NoGradGuard no_grad;
      const Var<float> right(right_t);
      depth_r = disparity_to_depth(disp_raw.detach(), rig).value();
      if (config.distill.photo_mask) {
        const Tensor<float> err_r =
            photometric_error(reproject_left(right, Var<float>(depth_r), rig).value(), left_t, config.thresholds.alpha);
        const Tensor<float> err_d =
            photometric_error(reproject_left(right, depth_d.detach(), rig).value(), left_t, config.thresholds.alpha);
        m_photo = photometric_mask(err_r, err_d, config.thresholds);
      } else {
        m_photo = ones_like(depth_r);
      }
      if (config.distill.visible_mask) {
        m_visible = visible_mask(occlusion_mask(disp_d.value(), config.thresholds),
                                 out_of_edge_mask(disp_d.value(), left_t.w()));
      } else {
        m_visible = ones_like(depth_r);
      }
    }
    result.mask_coverage =
        static_cast<double>(m_photo.vec().cwiseProduct(m_visible.vec()).sum()) / static_cast<double>(m_photo.size());
    terms.self_distilled = self_distilled_loss(depth_d, Var<float>(std::move(depth_r)), m_photo, m_visible);
    terms.smooth_distilled = smoothness_loss(disp_d, left_t, config.weights.gamma);
  }

  // (3) Loss composition and a single update.
  const Var<float> total = total_loss(terms, config.weights, epoch);
  result.synthesis = terms.synthesis.item();
  result.smooth_raw = terms.smooth_raw.item();
  if (terms.self_distilled) result.self_distilled = terms.self_distilled->item();
  if (terms.smooth_distilled) result.smooth_distilled = terms.smooth_distilled->item();
  result.total = total.item();
  if (!std::isfinite(result.total)) {
    throw NumericError("non-finite loss at epoch " + std::to_string(epoch), numeric_dump(result, net));
  }
  backward(total);
  optimizer.step(params, result.lr, config.offset_lr_scale);
  return result;
}

std::string format_log_record(const StepResult& r) {
  std::ostringstream out;
  out << std::setprecision(9);
  out << "{\"step\":" << r.step << ",\"epoch\":" << r.epoch << ",\"synthesis\":" << r.synthesis
      << ",\"smooth_raw\":" << r.smooth_raw;
  if (r.self_distilled) out << ",\"self_distilled\":" << *r.self_distilled;
  if (r.smooth_distilled) out << ",\"smooth_distilled\":" << *r.smooth_distilled;
  if (r.mask_coverage) out << ",\"mask_coverage\":" << *r.mask_coverage;
  out << ",\"total\":" << r.total << ",\"lr\":" << r.lr << "}";
  return out.str();
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9e3779b97f4a7c15ULL + b;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void recalibrate_batch_norm(DepthNet<float>& net, const SampleSource& data, const TrainConfig& config,
                            std::int64_t epoch) {
  const Index batches = data.size() / config.batch_size;
  require(batches > 0, "recalibrate_batch_norm: dataset is smaller than one batch");
  auto set = net.parameters();
  for (auto* bn : set.norms) {
    bn->cumulative = true;
    bn->tracked = 0;
  }
  const bool was_training = net.training();
  net.set_training(true);
  {
    NoGradGuard no_grad;
    for (Index b = 0; b < batches; ++b) {
      std::vector<Tensor<float>> lefts;
      for (Index i = b * config.batch_size; i < (b + 1) * config.batch_size; ++i) lefts.push_back(data.get(i).left);
      const auto features = net.encode(Var<float>(stack(lefts)));
      net.decode(features, PathSelector::raw);
      if (config.weights.distillation_active(epoch)) {
        if (config.distill.flip)
          net.decode_flipped(features, PathSelector::distilled);
        else
          net.decode(features, PathSelector::distilled);
      }
    }
  }
  net.set_training(was_training);
  for (auto* bn : set.norms) bn->cumulative = false;
}

Trainer::Trainer(TrainConfig config, DepthNet<float>& net)
    : config_(std::move(config)),
      net_(net),
      extractor_(config_.perceptual_seed),
      optimizer_(config_.adam_beta1, config_.adam_beta2, config_.adam_eps) {
  config_.validate();
  require(network_fingerprint(config_.network) == network_fingerprint(net_.config()),
          "Trainer: the network does not match the configured architecture");
}

Index Trainer::steps_per_epoch(Index dataset_size) const { return dataset_size / config_.batch_size; }

std::vector<Index> Trainer::batch_indices(std::int64_t step, Index dataset_size) const {
  const Index spe = steps_per_epoch(dataset_size);
  require(spe > 0, "Trainer: dataset of " + std::to_string(dataset_size) + " samples is smaller than one batch");
  const std::int64_t epoch = step / spe;
  const Index k = step % spe;
  std::vector<Index> order(static_cast<std::size_t>(dataset_size));
  for (Index i = 0; i < dataset_size; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(mix(config_.seed, static_cast<std::uint64_t>(epoch) + 1));
  std::shuffle(order.begin(), order.end(), rng);
  return {order.begin() + k * config_.batch_size, order.begin() + (k + 1) * config_.batch_size};
}

void Trainer::run(const SampleSource& data, const std::filesystem::path& out_dir, const TrainerCallbacks& callbacks,
                  std::int64_t max_steps) {
  const Index spe = steps_per_epoch(data.size());
  require(spe > 0, "Trainer: dataset of " + std::to_string(data.size()) + " samples is smaller than one batch");
  std::ofstream log;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log.open(out_dir / "train_log.jsonl", step_ == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("cannot write training log under '" + out_dir.string() + "'");
  }
  const std::int64_t total_steps = static_cast<std::int64_t>(config_.epochs) * spe;
  std::int64_t ran = 0;
  while (step_ < total_steps && ran < max_steps) {
    epoch_ = step_ / spe;
    Rng rng(mix(config_.seed ^ 0xa5a5a5a5ULL, static_cast<std::uint64_t>(step_)));
    std::vector<StereoSample> batch;
    for (Index i : batch_indices(step_, data.size())) batch.push_back(augment(data.get(i), config_.aug, rng));
    if (config_.distill.warm_start && step_ == static_cast<std::int64_t>(config_.weights.sd_start_epoch) * spe)
      net_.copy_raw_path_to_distilled();
    StepResult r = training_step(net_, batch, config_, epoch_, optimizer_, extractor_);
    r.step = step_;
    ++step_;
    ++ran;
    if (step_ == total_steps && config_.bn_recalibrate) recalibrate_batch_norm(net_, data, config_, r.epoch);
    if (log) log << format_log_record(r) << "\n" << std::flush;
    if (callbacks.on_step) callbacks.on_step(r);
    if (step_ % spe == 0) {
      epoch_ = step_ / spe;
      if (!out_dir.empty() && config_.checkpoint_every > 0 &&
          (epoch_ % config_.checkpoint_every == 0 || step_ == total_steps)) {
        std::ostringstream name;
        name << "checkpoint_epoch" << std::setw(3) << std::setfill('0') << epoch_ << ".ckpt";
        save(out_dir / name.str());
        save(out_dir / "last.ckpt");
      }
      if (callbacks.on_epoch) callbacks.on_epoch(epoch_);
    }
  }
  epoch_ = step_ / spe;
  if (!out_dir.empty() && step_ == total_steps) save(out_dir / "final.ckpt");
}

void Trainer::save(const std::filesystem::path& path) {
  Checkpoint ckpt = snapshot(net_);
  ckpt.meta["train_config"] = to_json(config_);
  ckpt.meta["step"] = step_;
  ckpt.meta["optimizer_steps"] = optimizer_.steps();
  for (const auto& [name, m] : optimizer_.first_moments()) ckpt.tensors.emplace("optim.m." + name, m);
  for (const auto& [name, v] : optimizer_.second_moments()) ckpt.tensors.emplace("optim.v." + name, v);
  write_checkpoint(path, ckpt);
}

void Trainer::resume(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  restore(net_, ckpt);
  step_ = ckpt.meta.value("step", std::int64_t{0});
  optimizer_ = Adam(config_.adam_beta1, config_.adam_beta2, config_.adam_eps);
  optimizer_.set_steps(ckpt.meta.value("optimizer_steps", std::int64_t{0}));
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("optim.m.", 0) == 0) optimizer_.first_moments()[name.substr(8)] = t;
    if (name.rfind("optim.v.", 0) == 0) optimizer_.second_moments()[name.substr(8)] = t;
  }
}

}  // namespace sdfa
