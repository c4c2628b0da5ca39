#pragma once

#include "sdfa/data.hpp"
#include "sdfa/losses.hpp"
#include "sdfa/masks.hpp"
#include "sdfa/network.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdfa {

struct AugmentationConfig {
  std::pair<double, double> resize_range{0.75, 1.5};
  std::pair<Index, Index> crop_hw{192, 640};
  double hflip_prob = 0.5;
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
  double hue = 0.05;

  void validate() const;
};

/// Ablation switches of the self-distilled pass.
struct DistillationOptions {
  /// Decode mirrored encoder features on the distilled path.
  bool flip = true;
  bool photo_mask = true;
  bool visible_mask = true;
  /// At the first distilled step, start the distilled head and skip-offset
  /// branches from the raw ones instead of their initialization. Without
  /// this the untrained head makes the first distillation losses orders of
  /// magnitude larger than the synthesis loss.
  bool warm_start = true;
};

struct TrainConfig {
  Index epochs = 50;
  Index batch_size = 12;
  double lr = 1e-4;
  std::vector<Index> lr_halve_epochs{30, 40};
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights weights;
  MaskThresholds thresholds;
  /// Architecture, including the disparity levels (d_min, d_max, N).
  NetworkConfig network;
  AugmentationConfig aug;
  DistillationOptions distill;
  std::uint64_t seed = 0;
  std::uint64_t perceptual_seed = 7;
  /// Learning-rate multiplier for the offset branches.
  double offset_lr_scale = 1.0;
  /// Checkpoint every this many epochs (0 disables periodic checkpoints).
  Index checkpoint_every = 1;
  /// Recompute batch-norm running statistics over the training set once the
  /// last epoch completes.
  bool bn_recalibrate = true;
  std::string data_root;
  std::string train_split = "train";
  std::string test_split = "test";

  void validate() const;
};

/// Full-scale settings (50 epochs, batch 12, 192x640 crops, N = 49).
TrainConfig paper_profile();
/// Desk-scale settings for 96x320 synthetic data on one CPU core.
TrainConfig desk_profile();

/// lr * 0.5^(number of halving epochs <= epoch).
double lr_schedule(std::int64_t epoch, const TrainConfig& config);

/// Random resize, crop, horizontal flip and color jitter, applied identically
/// to both views. Ground-truth disparity is rescaled with the width.
StereoSample augment(const StereoSample& sample, const AugmentationConfig& cfg, Rng& rng);

/// Bilinear resize (half-pixel centers) of every plane.
Tensor<float> resize_bilinear(const Tensor<float>& in, Index h, Index w);

class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::string dump) : std::runtime_error(what), dump_(std::move(dump)) {}
  /// JSON document describing the failing step.
  const std::string& dump() const { return dump_; }

 private:
  std::string dump_;
};

/// Adam with bias correction; moments are keyed by parameter name.
class Adam {
 public:
  Adam(double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Parameters whose name contains ".branch_" (the offset branches) use
  /// lr * offset_lr_scale.
  void step(ParameterSet<float>& params, double lr, double offset_lr_scale = 1.0);

  std::int64_t steps() const { return t_; }
  std::map<std::string, Tensor<float>>& first_moments() { return m_; }
  std::map<std::string, Tensor<float>>& second_moments() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::map<std::string, Tensor<float>> m_;
  std::map<std::string, Tensor<float>> v_;
};

struct StepResult {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double synthesis = 0;
  double smooth_raw = 0;
  std::optional<double> self_distilled;
  std::optional<double> smooth_distilled;
  double total = 0;
  double lr = 0;
  /// Decoder forward passes run by the step (1 before distillation, else 2).
  int decoder_passes = 0;
  /// Fraction of pixels kept by M_p * M_v (distilled steps only).
  std::optional<double> mask_coverage;
};

/// One iteration: self-supervised pass, optional self-distilled pass, loss
/// composition and a single optimizer update.
StepResult training_step(DepthNet<float>& net, const std::vector<StereoSample>& batch, const TrainConfig& config,
                         std::int64_t epoch, Adam& optimizer, const PerceptualExtractor<float>& extractor);

/// Replaces every batch-norm running statistic with its equal-weight average
/// over `data` (unaugmented, in order, full batches), using the decoder
/// passes a training step of `epoch` runs. Weights are unchanged.
void recalibrate_batch_norm(DepthNet<float>& net, const SampleSource& data, const TrainConfig& config,
                            std::int64_t epoch);

/// One JSON-lines training-log record.
std::string format_log_record(const StepResult& r);

struct TrainerCallbacks {
  std::function<void(const StepResult&)> on_step;
  /// Called after each epoch with the number of completed epochs.
  std::function<void(std::int64_t)> on_epoch;
};

/// Epoch loop with deterministic shuffling and per-step augmentation seeds,
/// JSON-lines logging and checkpoints.
class Trainer {
 public:
  Trainer(TrainConfig config, DepthNet<float>& net);

  const TrainConfig& config() const { return config_; }
  std::int64_t step() const { return step_; }
  std::int64_t epoch() const { return epoch_; }
  Adam& optimizer() { return optimizer_; }

  /// Steps per epoch for a source of the given size (incomplete batches dropped).
  Index steps_per_epoch(Index dataset_size) const;

  /// Trains until `config.epochs` epochs are complete or `max_steps` more
  /// steps have run. Writes train_log.jsonl and checkpoints under out_dir
  /// when it is non-empty.
  void run(const SampleSource& data, const std::filesystem::path& out_dir = {},
           const TrainerCallbacks& callbacks = {},
           std::int64_t max_steps = std::numeric_limits<std::int64_t>::max());

  /// Batch composition of a global step: sample indices in a seeded
  /// per-epoch permutation.
  std::vector<Index> batch_indices(std::int64_t step, Index dataset_size) const;

  void save(const std::filesystem::path& path);
  /// Restores weights, optimizer moments and the step counter.
  void resume(const std::filesystem::path& path);

 private:
  TrainConfig config_;
  DepthNet<float>& net_;
  PerceptualExtractor<float> extractor_;
  Adam optimizer_;
  std::int64_t step_ = 0;
  std::int64_t epoch_ = 0;
};

}  // namespace sdfa
