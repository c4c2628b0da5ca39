#include "sdfa/network.hpp"

#include <map>

namespace sdfa {

std::string to_string(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::sdfa: return "sdfa";
    case DecoderKind::oa: return "oa";
    case DecoderKind::concat: return "concat";
  }
  return "sdfa";
}

DecoderKind decoder_kind_from_string(const std::string& name) {
  if (name == "sdfa") return DecoderKind::sdfa;
  if (name == "oa") return DecoderKind::oa;
  if (name == "concat" || name == "raw") return DecoderKind::concat;
  throw std::invalid_argument("unknown decoder kind '" + name + "' (expected sdfa, oa or concat)");
}

void NetworkConfig::validate() const {
  backbone.validate();
  for (Index w : decoder_widths) require(w > 0, "NetworkConfig: decoder widths must be positive");
  for (Index c : restoration_channels) require(c > 0, "NetworkConfig: restoration channels must be positive");
  require(branch_hidden >= 0, "NetworkConfig: branch_hidden must be non-negative");
  require(levels >= 1, "NetworkConfig: need at least one disparity level");
}

template <typename Scalar>
DepthNet<Scalar>::DepthNet(NetworkConfig config, Init init) : config_(std::move(config)) {
  config_.validate();
  levels_ = quantize_disparities(config_.d_min, config_.d_max, config_.levels);
  Rng rng(config_.seed);
  backbone_ = std::make_unique<ConvBackbone<Scalar>>(config_.backbone, rng);

  const auto& enc = config_.backbone.stage_channels;
  // Block i consumes F^{i+1} (the coarser decoded feature) and C^i.
  Index prev = enc[3];
  for (int b = 2; b >= 0; --b) {
    const Index width = config_.decoder_widths[static_cast<std::size_t>(b)];
    const Index skip = enc[static_cast<std::size_t>(b)];
    const Index hidden = config_.branch_hidden > 0 ? config_.branch_hidden : std::max<Index>(1, width / 2);
    switch (config_.decoder) {
      case DecoderKind::sdfa:
        blocks_[static_cast<std::size_t>(b)] = std::make_unique<SdfaBlock<Scalar>>(prev, skip, width, hidden, rng);
        break;
      case DecoderKind::oa:
        blocks_[static_cast<std::size_t>(b)] = std::make_unique<OaBlock<Scalar>>(prev, skip, width, hidden, rng);
        break;
      case DecoderKind::concat:
        blocks_[static_cast<std::size_t>(b)] = std::make_unique<ConcatBlock<Scalar>>(prev, skip, width, rng);
        break;
    }
    prev = width;
  }
  restore1_ = ConvElu<Scalar>(config_.decoder_widths[0], config_.restoration_channels[0], rng);
  restore2_ = ConvElu<Scalar>(config_.restoration_channels[0], config_.restoration_channels[1], rng);
  head_raw_ = Conv2d<Scalar>(config_.restoration_channels[1], config_.levels, 3, 1, rng, WeightInit::small);
  if (has_distilled_path())
    head_distilled_ = Conv2d<Scalar>(config_.restoration_channels[1], config_.levels, 3, 1, rng, WeightInit::small);

  if (init == Init::none) {
    for (auto& p : parameters().params) p.var->mutable_value().set_zero();
  } else {
    loaded_ = true;
  }
}

template <typename Scalar>
EncoderFeatures<Scalar> DepthNet<Scalar>::encode_impl(const Var<Scalar>& image, bool training) const {
  auto features = backbone_->encode(image, training);
  const Shape s = image.shape();
  for (std::size_t i = 0; i < 4; ++i) {
    const Index factor = Index{2} << i;
    require(features[i].shape().h * factor == s.h && features[i].shape().w * factor == s.w,
            "backbone violates the resolution contract at stage " + std::to_string(i + 1));
  }
  return features;
}

template <typename Scalar>
EncoderFeatures<Scalar> DepthNet<Scalar>::encode(const Var<Scalar>& image) const {
  return encode_impl(image, training_);
}

template <typename Scalar>
Var<Scalar> DepthNet<Scalar>::decode_impl(const EncoderFeatures<Scalar>& features, PathSelector path,
                                          bool training, DecoderTrace<Scalar>* trace) const {
  for (std::size_t i = 0; i + 1 < 4; ++i) {
    const Shape fine = features[i].shape(), coarse = features[i + 1].shape();
    require(fine.h == 2 * coarse.h && fine.w == 2 * coarse.w,
            "decoder: encoder features violate the resolution contract");
  }
  Var<Scalar> f = features[3];
  for (int b = 2; b >= 0; --b) {
    const auto idx = static_cast<std::size_t>(b);
    f = blocks_[idx]->forward(f, features[idx], path, training, trace ? &(*trace)[idx] : nullptr);
  }
  f = restore2_(restore1_(upsample_nearest2x(f)));
  const bool distilled_head = path == PathSelector::distilled && has_distilled_path();
  return distilled_head ? head_distilled_(f) : head_raw_(f);
}

template <typename Scalar>
Var<Scalar> DepthNet<Scalar>::decode(const EncoderFeatures<Scalar>& features, PathSelector path,
                                     DecoderTrace<Scalar>* trace) const {
  return decode_impl(features, path, training_, trace);
}

template <typename Scalar>
Var<Scalar> DepthNet<Scalar>::decode_flipped(const EncoderFeatures<Scalar>& features, PathSelector path,
                                             DecoderTrace<Scalar>* trace) const {
  EncoderFeatures<Scalar> flipped;
  for (std::size_t i = 0; i < 4; ++i) flipped[i] = flip_width(features[i]);
  return flip_width(decode_impl(flipped, path, training_, trace));
}

template <typename Scalar>
DepthNetOutputs<Scalar> DepthNet<Scalar>::forward_raw(const Var<Scalar>& image) const {
  return {decode(encode(image), PathSelector::raw), PathSelector::raw};
}

template <typename Scalar>
DepthNetOutputs<Scalar> DepthNet<Scalar>::forward_distilled_flipped(const Var<Scalar>& image) const {
  return {decode_flipped(encode(image), PathSelector::distilled), PathSelector::distilled};
}

template <typename Scalar>
Tensor<Scalar> DepthNet<Scalar>::infer_disparity(const Tensor<Scalar>& image, PathSelector path,
                                                 bool flipped) const {
  if (!loaded_) throw StateError("DepthNet: parameters have not been loaded");
  NoGradGuard no_grad;
  Var<Scalar> input(image);
  auto features = encode_impl(input, false);
  Var<Scalar> volume;
  if (flipped) {
    EncoderFeatures<Scalar> mirrored;
    for (std::size_t i = 0; i < 4; ++i) mirrored[i] = flip_width(features[i]);
    volume = flip_width(decode_impl(mirrored, path, false, nullptr));
  } else {
    volume = decode_impl(features, path, false, nullptr);
  }
  return volume_to_disparity(volume, levels_).value();
}

template <typename Scalar>
DecoderTrace<Scalar> DepthNet<Scalar>::trace_offsets(const Tensor<Scalar>& image, PathSelector path,
                                                     bool flipped) const {
  if (!loaded_) throw StateError("DepthNet: parameters have not been loaded");
  NoGradGuard no_grad;
  auto features = encode_impl(Var<Scalar>(image), false);
  if (flipped)
    for (auto& f : features) f = flip_width(f);
  DecoderTrace<Scalar> trace;
  decode_impl(features, path, false, &trace);
  if (flipped) {
    // Mirror each map and negate its horizontal component.
    for (auto& stage : trace)
      for (auto* delta : {&stage.delta_f, &stage.delta_c1, &stage.delta_c2}) {
        if (!*delta) continue;
        Tensor<Scalar> m = flip_width(**delta);
        for (Index n = 0; n < m.n(); ++n) {
          Scalar* dx = m.plane(n, 0);
          for (Index p = 0; p < m.h() * m.w(); ++p) dx[p] = -dx[p];
        }
        *delta = std::move(m);
      }
  }
  return trace;
}

template <typename Scalar>
Tensor<Scalar> DepthNet<Scalar>::infer_depth(const Tensor<Scalar>& image, const CameraRig& rig) const {
  Tensor<Scalar> disparity = infer_disparity(image, PathSelector::distilled, true);
  NoGradGuard no_grad;
  return disparity_to_depth(Var<Scalar>(std::move(disparity)), rig).value();
}

template <typename Scalar>
ParameterSet<Scalar> DepthNet<Scalar>::parameters() {
  ParameterSet<Scalar> set;
  backbone_->collect(set, "encoder");
  for (int b = 0; b < 3; ++b) blocks_[static_cast<std::size_t>(b)]->collect(set, "decoder.block" + std::to_string(b + 1));
  restore1_.collect(set, "decoder.restore1");
  restore2_.collect(set, "decoder.restore2");
  head_raw_.collect(set, "decoder.head_raw");
  if (has_distilled_path()) head_distilled_.collect(set, "decoder.head_distilled");
  return set;
}

template <typename Scalar>
void DepthNet<Scalar>::copy_raw_path_to_distilled() {
  if (!has_distilled_path()) return;
  auto set = parameters();
  std::map<std::string, Var<Scalar>*> by_name;
  for (auto& p : set.params) by_name[p.name] = p.var;
  const std::pair<std::string, std::string> pairs[] = {{"head_raw", "head_distilled"}, {"branch_c1", "branch_c2"}};
  for (auto& p : set.params)
    for (const auto& [from, to] : pairs) {
      const auto pos = p.name.find(from);
      if (pos == std::string::npos) continue;
      std::string target = p.name;
      target.replace(pos, from.size(), to);
      const auto it = by_name.find(target);
      require(it != by_name.end(), "copy_raw_path_to_distilled: missing parameter " + target);
      it->second->mutable_value() = p.var->value();
    }
}

template class DepthNet<float>;
template class DepthNet<double>;

}  // namespace sdfa
