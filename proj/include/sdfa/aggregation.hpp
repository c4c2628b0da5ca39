#pragma once

#include "sdfa/geometry.hpp"
#include "sdfa/layers.hpp"

#include <memory>
#include <optional>
#include <string_view>

namespace sdfa {

/// Which decoder parameterization a forward pass uses.
enum class PathSelector { raw, distilled };

inline std::string_view to_string(PathSelector p) { return p == PathSelector::raw ? "raw" : "distilled"; }

/// Picks d1 on the raw path and d2 on the distilled path.
template <typename Scalar>
Var<Scalar> switch_offset(const Var<Scalar>& d1, const Var<Scalar>& d2, PathSelector path) {
  require_same_shape(d1.shape(), d2.shape(), "switch_offset");
  return path == PathSelector::raw ? d1 : d2;
}

/// Offset maps produced inside one aggregation block, kept for diagnostics.
template <typename Scalar>
struct OffsetTrace {
  std::optional<Tensor<Scalar>> delta_f;
  std::optional<Tensor<Scalar>> delta_c1;
  std::optional<Tensor<Scalar>> delta_c2;
};

/// Mean per-pixel L2 norm (pixels) of each offset map.
template <typename Scalar>
std::vector<double> offset_norm_stats(const std::vector<Tensor<Scalar>>& deltas) {
  require(!deltas.empty(), "offset_norm_stats: empty list");
  std::vector<double> norms;
  norms.reserve(deltas.size());
  for (const auto& d : deltas) {
    require(d.c() == 2, "offset_norm_stats: offset map must have 2 channels");
    double acc = 0;
    const Index hw = d.h() * d.w();
    for (Index i = 0; i < d.n(); ++i) {
      const Scalar* dx = d.plane(i, 0);
      const Scalar* dy = d.plane(i, 1);
      for (Index p = 0; p < hw; ++p)
        acc += std::sqrt(static_cast<double>(dx[p]) * dx[p] + static_cast<double>(dy[p]) * dy[p]);
    }
    norms.push_back(acc / static_cast<double>(d.n() * hw));
  }
  return norms;
}

/// Two-layer branch emitting a 2-channel offset map. The output layer starts
/// at zero so a fresh branch performs the identity refinement.
template <typename Scalar>
struct OffsetBranch {
  Conv2d<Scalar> hidden;
  Conv2d<Scalar> out;

  OffsetBranch() = default;
  OffsetBranch(Index in, Index hidden_channels, Rng& rng)
      : hidden(in, hidden_channels, 3, 1, rng), out(hidden_channels, 2, 3, 1, rng, WeightInit::zero) {}

  Var<Scalar> operator()(const Var<Scalar>& x) const { return out(elu(hidden(x))); }
  void collect(ParameterSet<Scalar>& set, const std::string& prefix) {
    hidden.collect(set, join_name(prefix, "hidden"));
    out.collect(set, join_name(prefix, "out"));
  }
};

/// Common interface of the decoder's multi-scale aggregation blocks: fuse a
/// decoded feature F_prev (h x w) with an encoder skip feature C (2h x 2w).
template <typename Scalar>
class AggregationBlock {
 public:
  virtual ~AggregationBlock() = default;
  virtual Var<Scalar> forward(const Var<Scalar>& f_prev, const Var<Scalar>& c_skip, PathSelector path,
                              bool training, OffsetTrace<Scalar>* trace = nullptr) const = 0;
  virtual void collect(ParameterSet<Scalar>& set, const std::string& prefix) = 0;
  virtual Index width() const = 0;
};

namespace detail {
inline void require_double_size(const Shape& f_prev, const Shape& c_skip, const char* who) {
  require(c_skip.n == f_prev.n, std::string(who) + ": batch mismatch");
  require(c_skip.h == 2 * f_prev.h && c_skip.w == 2 * f_prev.w,
          std::string(who) + ": skip feature " + c_skip.str() + " must be exactly twice the size of " +
              f_prev.str());
}
}  // namespace detail

/// Self-distilled feature aggregation: one offset branch refines the
/// upsampled decoded feature, two path-switched branches refine the skip
/// feature, and the two refined maps are summed and fused.
template <typename Scalar>
class SdfaBlock final : public AggregationBlock<Scalar> {
 public:
  ConvElu<Scalar> prev_conv;
  ConvBnElu<Scalar> skip_conv;
  OffsetBranch<Scalar> branch_f;
  OffsetBranch<Scalar> branch_c1;
  OffsetBranch<Scalar> branch_c2;
  ConvElu<Scalar> fuse_conv;

  SdfaBlock(Index prev_channels, Index skip_channels, Index width, Index branch_hidden, Rng& rng)
      : prev_conv(prev_channels, width, rng),
        skip_conv(skip_channels, width, rng),
        branch_f(2 * width, branch_hidden, rng),
        branch_c1(2 * width, branch_hidden, rng),
        branch_c2(2 * width, branch_hidden, rng),
        fuse_conv(width, width, rng),
        width_(width) {}

  Var<Scalar> forward(const Var<Scalar>& f_prev, const Var<Scalar>& c_skip, PathSelector path,
                      bool training, OffsetTrace<Scalar>* trace = nullptr) const override {
    detail::require_double_size(f_prev.shape(), c_skip.shape(), "SdfaBlock");
    require(f_prev.shape().c == prev_conv.conv.in_channels(), "SdfaBlock: decoded feature has " +
                                                                  std::to_string(f_prev.shape().c) +
                                                                  " channels, expected " +
                                                                  std::to_string(prev_conv.conv.in_channels()));
    require(c_skip.shape().c == skip_conv.conv.in_channels(), "SdfaBlock: skip feature has " +
                                                                  std::to_string(c_skip.shape().c) +
                                                                  " channels, expected " +
                                                                  std::to_string(skip_conv.conv.in_channels()));
    Var<Scalar> up = upsample_bilinear2x(prev_conv(f_prev));
    Var<Scalar> adjusted = skip_conv(c_skip, training);
    Var<Scalar> pair = concat_channels(up, adjusted);

    Var<Scalar> delta_f = branch_f(pair);
    Var<Scalar> delta_cs;
    if (trace) {
      Var<Scalar> delta_c1 = branch_c1(pair);
      Var<Scalar> delta_c2 = branch_c2(pair);
      delta_cs = switch_offset(delta_c1, delta_c2, path);
      trace->delta_f = delta_f.value();
      trace->delta_c1 = delta_c1.value();
      trace->delta_c2 = delta_c2.value();
    } else {
      // Only the selected branch is evaluated; the other would be discarded by the switch.
      delta_cs = path == PathSelector::raw ? branch_c1(pair) : branch_c2(pair);
    }
    Var<Scalar> refined_f = refine(up, delta_f);
    Var<Scalar> refined_c = refine(adjusted, delta_cs);
    return fuse_conv(add(refined_c, refined_f));
  }

  void collect(ParameterSet<Scalar>& set, const std::string& prefix) override {
    prev_conv.collect(set, join_name(prefix, "prev_conv"));
    skip_conv.collect(set, join_name(prefix, "skip_conv"));
    branch_f.collect(set, join_name(prefix, "branch_f"));
    branch_c1.collect(set, join_name(prefix, "branch_c1"));
    branch_c2.collect(set, join_name(prefix, "branch_c2"));
    fuse_conv.collect(set, join_name(prefix, "fuse_conv"));
  }

  Index width() const override { return width_; }

 private:
  Index width_;
};

/// Offset-based aggregation without the distilled path: a single skip branch.
template <typename Scalar>
class OaBlock final : public AggregationBlock<Scalar> {
 public:
  ConvElu<Scalar> prev_conv;
  ConvBnElu<Scalar> skip_conv;
  OffsetBranch<Scalar> branch_f;
  OffsetBranch<Scalar> branch_c;
  ConvElu<Scalar> fuse_conv;

  OaBlock(Index prev_channels, Index skip_channels, Index width, Index branch_hidden, Rng& rng)
      : prev_conv(prev_channels, width, rng),
        skip_conv(skip_channels, width, rng),
        branch_f(2 * width, branch_hidden, rng),
        branch_c(2 * width, branch_hidden, rng),
        fuse_conv(width, width, rng),
        width_(width) {}

  Var<Scalar> forward(const Var<Scalar>& f_prev, const Var<Scalar>& c_skip, PathSelector /*path*/,
                      bool training, OffsetTrace<Scalar>* trace = nullptr) const override {
    detail::require_double_size(f_prev.shape(), c_skip.shape(), "OaBlock");
    require(f_prev.shape().c == prev_conv.conv.in_channels(), "OaBlock: decoded feature channel mismatch");
    require(c_skip.shape().c == skip_conv.conv.in_channels(), "OaBlock: skip feature channel mismatch");
    Var<Scalar> up = upsample_bilinear2x(prev_conv(f_prev));
    Var<Scalar> adjusted = skip_conv(c_skip, training);
    Var<Scalar> pair = concat_channels(up, adjusted);
    Var<Scalar> delta_f = branch_f(pair);
    Var<Scalar> delta_c = branch_c(pair);
    if (trace) {
      trace->delta_f = delta_f.value();
      trace->delta_c1 = delta_c.value();
    }
    return fuse_conv(add(refine(adjusted, delta_c), refine(up, delta_f)));
  }

  void collect(ParameterSet<Scalar>& set, const std::string& prefix) override {
    prev_conv.collect(set, join_name(prefix, "prev_conv"));
    skip_conv.collect(set, join_name(prefix, "skip_conv"));
    branch_f.collect(set, join_name(prefix, "branch_f"));
    branch_c.collect(set, join_name(prefix, "branch_c"));
    fuse_conv.collect(set, join_name(prefix, "fuse_conv"));
  }

  Index width() const override { return width_; }

 private:
  Index width_;
};

/// Plain decoder block: upsampled decoded feature concatenated with the raw
/// skip feature, then a 3x3 ELU convolution.
template <typename Scalar>
class ConcatBlock final : public AggregationBlock<Scalar> {
 public:
  ConvElu<Scalar> prev_conv;
  ConvElu<Scalar> fuse_conv;

  ConcatBlock(Index prev_channels, Index skip_channels, Index width, Rng& rng)
      : prev_conv(prev_channels, width, rng), fuse_conv(width + skip_channels, width, rng), width_(width) {}

  Var<Scalar> forward(const Var<Scalar>& f_prev, const Var<Scalar>& c_skip, PathSelector /*path*/,
                      bool /*training*/, OffsetTrace<Scalar>* /*trace*/ = nullptr) const override {
    detail::require_double_size(f_prev.shape(), c_skip.shape(), "ConcatBlock");
    require(f_prev.shape().c == prev_conv.conv.in_channels(), "ConcatBlock: decoded feature channel mismatch");
    require(c_skip.shape().c + width_ == fuse_conv.conv.in_channels(),
            "ConcatBlock: skip feature channel mismatch");
    return fuse_conv(concat_channels(upsample_bilinear2x(prev_conv(f_prev)), c_skip));
  }

  void collect(ParameterSet<Scalar>& set, const std::string& prefix) override {
    prev_conv.collect(set, join_name(prefix, "prev_conv"));
    fuse_conv.collect(set, join_name(prefix, "fuse_conv"));
  }

  Index width() const override { return width_; }

 private:
  Index width_;
};

}  // namespace sdfa
