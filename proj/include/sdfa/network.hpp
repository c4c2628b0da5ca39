#pragma once

#include "sdfa/aggregation.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

namespace sdfa {

enum class DecoderKind { sdfa, oa, concat };

std::string to_string(DecoderKind kind);
DecoderKind decoder_kind_from_string(const std::string& name);

/// Encoder output contract: four stages at 1/2, 1/4, 1/8 and 1/16 of the input.
struct BackboneSpec {
  std::string name = "conv4";
  std::array<Index, 4> stage_channels{32, 64, 128, 256};
  Index stem_stride = 2;

  void validate() const {
    require(stem_stride == 2, "BackboneSpec: stem stride must be 2");
    for (Index c : stage_channels) require(c > 0, "BackboneSpec: stage channels must be positive");
  }
};

struct NetworkConfig {
  BackboneSpec backbone;
  /// Output width of the aggregation blocks, finest (block 1) to coarsest (block 3).
  std::array<Index, 3> decoder_widths{64, 64, 128};
  /// Hidden width of each offset branch; 0 selects half the block width.
  Index branch_hidden = 0;
  std::array<Index, 2> restoration_channels{32, 32};
  DecoderKind decoder = DecoderKind::sdfa;
  double d_min = 2.0;
  double d_max = 300.0;
  Index levels = 49;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Logit volume predicted for one data path.
template <typename Scalar>
struct DepthNetOutputs {
  Var<Scalar> volume;
  PathSelector path = PathSelector::raw;
};

template <typename Scalar>
using EncoderFeatures = std::array<Var<Scalar>, 4>;

template <typename Scalar>
using DecoderTrace = std::array<OffsetTrace<Scalar>, 3>;

/// Raised when an operation needs weights that have not been loaded.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename Scalar>
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual const BackboneSpec& spec() const = 0;
  virtual EncoderFeatures<Scalar> encode(const Var<Scalar>& image, bool training) const = 0;
  virtual void collect(ParameterSet<Scalar>& set, const std::string& prefix) = 0;
};

/// Four-stage convolutional pyramid: a stride-2 stem and three stride-2
/// stages, each followed by one more 3x3 convolution. Every convolution is
/// batch normalized, which keeps feature magnitudes (and so the output
/// logits) bounded early in training.
template <typename Scalar>
class ConvBackbone final : public Backbone<Scalar> {
 public:
  ConvBackbone(BackboneSpec spec, Rng& rng) : spec_(std::move(spec)) {
    spec_.validate();
    Index in = 3;
    for (std::size_t s = 0; s < 4; ++s) {
      const Index out = spec_.stage_channels[s];
      down_[s] = ConvBnElu<Scalar>(in, out, rng, 2);
      refine_[s] = ConvBnElu<Scalar>(out, out, rng, 1);
      in = out;
    }
  }

  const BackboneSpec& spec() const override { return spec_; }

  EncoderFeatures<Scalar> encode(const Var<Scalar>& image, bool training) const override {
    const Shape s = image.shape();
    require(s.c == 3, "encoder: expected a 3-channel image, got " + std::to_string(s.c));
    require(s.h % 16 == 0 && s.w % 16 == 0,
            "encoder: input size " + std::to_string(s.h) + "x" + std::to_string(s.w) + " is not divisible by 16");
    Tensor<Scalar> normalized(s);
    normalized.vec() = (image.value().vec().array() - Scalar(0.45)) / Scalar(0.225);
    Var<Scalar> x = make_result<Scalar>(std::move(normalized), {image}, [](Node<Scalar>& n) {
      if (auto* g = input_grad(n, 0)) g->vec() += n.grad.vec() / Scalar(0.225);
    });
    EncoderFeatures<Scalar> features;
    for (std::size_t st = 0; st < 4; ++st) {
      x = refine_[st](down_[st](x, training), training);
      features[st] = x;
    }
    return features;
  }

  void collect(ParameterSet<Scalar>& set, const std::string& prefix) override {
    for (std::size_t s = 0; s < 4; ++s) {
      const std::string stage = join_name(prefix, "stage" + std::to_string(s + 1));
      down_[s].collect(set, join_name(stage, "down"));
      refine_[s].collect(set, join_name(stage, "conv"));
    }
  }

 private:
  BackboneSpec spec_;
  std::array<ConvBnElu<Scalar>, 4> down_;
  std::array<ConvBnElu<Scalar>, 4> refine_;
};

/// Encoder-decoder depth network with a raw and a distilled data path. The
/// decoder aggregates encoder features with three blocks (coarsest first),
/// restores full resolution, and emits an N-level disparity logit volume
/// from the head of the selected path.
template <typename Scalar>
class DepthNet {
 public:
  enum class Init { random, none };

  explicit DepthNet(NetworkConfig config, Init init = Init::random);
  DepthNet(const DepthNet&) = delete;
  DepthNet& operator=(const DepthNet&) = delete;

  const NetworkConfig& config() const { return config_; }
  const DisparityLevels& levels() const { return levels_; }
  bool has_distilled_path() const { return config_.decoder == DecoderKind::sdfa; }

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  /// True once weights are initialized or loaded.
  bool loaded() const { return loaded_; }
  void mark_loaded() { loaded_ = true; }

  EncoderFeatures<Scalar> encode(const Var<Scalar>& image) const;
  Var<Scalar> decode(const EncoderFeatures<Scalar>& features, PathSelector path,
                     DecoderTrace<Scalar>* trace = nullptr) const;
  /// Flips every feature along width, decodes, and flips the volume back.
  Var<Scalar> decode_flipped(const EncoderFeatures<Scalar>& features, PathSelector path,
                             DecoderTrace<Scalar>* trace = nullptr) const;

  DepthNetOutputs<Scalar> forward_raw(const Var<Scalar>& image) const;
  DepthNetOutputs<Scalar> forward_distilled_flipped(const Var<Scalar>& image) const;

  /// Metric depth from the distilled flipped path, evaluated without
  /// updating normalization statistics.
  Tensor<Scalar> infer_depth(const Tensor<Scalar>& image, const CameraRig& rig) const;
  /// Disparity (pixels) from the given path, evaluation mode.
  Tensor<Scalar> infer_disparity(const Tensor<Scalar>& image, PathSelector path, bool flipped) const;
  /// Offset maps of every block on the given path, evaluation mode. With
  /// `flipped`, maps are mirrored back to image orientation.
  DecoderTrace<Scalar> trace_offsets(const Tensor<Scalar>& image, PathSelector path, bool flipped) const;

  ParameterSet<Scalar> parameters();

  /// Overwrites the distilled head and the distilled skip-offset branches
  /// with their raw-path counterparts. No-op without a distilled path.
  void copy_raw_path_to_distilled();

 private:
  Var<Scalar> decode_impl(const EncoderFeatures<Scalar>& features, PathSelector path, bool training,
                          DecoderTrace<Scalar>* trace) const;
  EncoderFeatures<Scalar> encode_impl(const Var<Scalar>& image, bool training) const;

  NetworkConfig config_;
  DisparityLevels levels_;
  std::unique_ptr<Backbone<Scalar>> backbone_;
  std::array<std::unique_ptr<AggregationBlock<Scalar>>, 3> blocks_;
  ConvElu<Scalar> restore1_;
  ConvElu<Scalar> restore2_;
  Conv2d<Scalar> head_raw_;
  Conv2d<Scalar> head_distilled_;
  bool training_ = true;
  bool loaded_ = false;
};

extern template class DepthNet<float>;
extern template class DepthNet<double>;

}  // namespace sdfa
