#pragma once

#include "sdfa/ops.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace sdfa {

using Rng = std::mt19937_64;

template <typename Scalar>
struct BatchNorm2d;

/// Named views of a model's trainable parameters and non-trainable buffers.
/// Names are dot-separated paths, e.g. "decoder.sdfa2.branch_c1.out.weight".
template <typename Scalar>
struct ParameterSet {
  struct Param {
    std::string name;
    Var<Scalar>* var;
  };
  struct Buffer {
    std::string name;
    Tensor<Scalar>* tensor;
  };
  std::vector<Param> params;
  std::vector<Buffer> buffers;
  std::vector<BatchNorm2d<Scalar>*> norms;

  void add(const std::string& name, Var<Scalar>& v) { params.push_back({name, &v}); }
  void add_buffer(const std::string& name, Tensor<Scalar>& t) { buffers.push_back({name, &t}); }

  Index scalar_count() const {
    Index total = 0;
    for (const auto& p : params) total += p.var->value().size();
    return total;
  }
};

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

enum class WeightInit { he, zero, small };

template <typename Scalar>
struct Conv2d {
  Var<Scalar> weight;
  Var<Scalar> bias;
  Index stride = 1;

  Conv2d() = default;
  Conv2d(Index in, Index out, Index kernel, Index stride_, Rng& rng, WeightInit init = WeightInit::he)
      : weight(Tensor<Scalar>(Shape{out, in, kernel, kernel}), true),
        bias(Tensor<Scalar>(Shape{out, 1, 1, 1}), true),
        stride(stride_) {
    const double fan_in = static_cast<double>(in * kernel * kernel);
    double stddev = 0;
    switch (init) {
      case WeightInit::he: stddev = std::sqrt(2.0 / fan_in); break;
      case WeightInit::small: stddev = 0.1 / std::sqrt(fan_in); break;
      case WeightInit::zero: stddev = 0; break;
    }
    std::normal_distribution<double> dist(0.0, 1.0);
    auto& w = weight.mutable_value();
    for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<Scalar>(stddev * dist(rng));
  }

  Index in_channels() const { return weight.shape().c; }
  Index out_channels() const { return weight.shape().n; }

  Var<Scalar> operator()(const Var<Scalar>& x) const { return conv2d(x, weight, bias, stride); }

  void collect(ParameterSet<Scalar>& set, const std::string& prefix) {
    set.add(join_name(prefix, "weight"), weight);
    set.add(join_name(prefix, "bias"), bias);
  }
};

template <typename Scalar>
struct BatchNorm2d {
  Var<Scalar> gamma;
  Var<Scalar> beta;
  mutable Tensor<Scalar> running_mean;
  mutable Tensor<Scalar> running_var;
  Scalar momentum = Scalar(0.1);
  /// When set, training-mode calls accumulate an equal-weight average of the
  /// batch statistics instead of an exponential one.
  bool cumulative = false;
  mutable Index tracked = 0;

  BatchNorm2d() = default;
  explicit BatchNorm2d(Index channels)
      : gamma(Tensor<Scalar>(Shape{channels, 1, 1, 1}, Scalar(1)), true),
        beta(Tensor<Scalar>(Shape{channels, 1, 1, 1}), true),
        running_mean(Shape{channels, 1, 1, 1}),
        running_var(Shape{channels, 1, 1, 1}, Scalar(1)) {}

  Var<Scalar> operator()(const Var<Scalar>& x, bool training) const {
    Scalar m = momentum;
    if (training && cumulative) m = Scalar(1) / static_cast<Scalar>(++tracked);
    return batch_norm(x, gamma, beta, running_mean, running_var, training, m);
  }

  void collect(ParameterSet<Scalar>& set, const std::string& prefix) {
    set.add(join_name(prefix, "gamma"), gamma);
    set.add(join_name(prefix, "beta"), beta);
    set.add_buffer(join_name(prefix, "running_mean"), running_mean);
    set.add_buffer(join_name(prefix, "running_var"), running_var);
    set.norms.push_back(this);
  }
};

/// 3x3 convolution followed by ELU.
template <typename Scalar>
struct ConvElu {
  Conv2d<Scalar> conv;

  ConvElu() = default;
  ConvElu(Index in, Index out, Rng& rng, Index stride = 1) : conv(in, out, 3, stride, rng) {}

  Var<Scalar> operator()(const Var<Scalar>& x) const { return elu(conv(x)); }
  void collect(ParameterSet<Scalar>& set, const std::string& prefix) { conv.collect(set, prefix); }
};

/// 3x3 convolution, batch normalization, ELU.
template <typename Scalar>
struct ConvBnElu {
  Conv2d<Scalar> conv;
  BatchNorm2d<Scalar> bn;

  ConvBnElu() = default;
  ConvBnElu(Index in, Index out, Rng& rng, Index stride = 1) : conv(in, out, 3, stride, rng), bn(out) {}

  Var<Scalar> operator()(const Var<Scalar>& x, bool training) const { return elu(bn(conv(x), training)); }
  void collect(ParameterSet<Scalar>& set, const std::string& prefix) {
    conv.collect(set, join_name(prefix, "conv"));
    bn.collect(set, join_name(prefix, "bn"));
  }
};

}  // namespace sdfa
