#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdfa {

using Index = Eigen::Index;

/// Batch/channel/height/width extents of a dense NCHW array.
struct Shape {
  Index n = 1;
  Index c = 1;
  Index h = 1;
  Index w = 1;

  Index size() const { return n * c * h * w; }
  Index plane() const { return h * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
  }
};

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense NCHW array backed by an Eigen vector. Feature maps, images, logit
/// volumes, offset maps and masks all use this layout; a single map is the
/// n == 1 case.
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(Vector::Zero(shape.size())) {}
  Tensor(Shape shape, Scalar fill) : shape_(shape), data_(Vector::Constant(shape.size(), fill)) {}
  Tensor(Index n, Index c, Index h, Index w) : Tensor(Shape{n, c, h, w}) {}

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }

  const Shape& shape() const { return shape_; }
  Index n() const { return shape_.n; }
  Index c() const { return shape_.c; }
  Index h() const { return shape_.h; }
  Index w() const { return shape_.w; }
  Index size() const { return shape_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar& operator()(Index n, Index c, Index y, Index x) {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  Scalar operator()(Index n, Index c, Index y, Index x) const {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Scalar* plane(Index n, Index c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
  const Scalar* plane(Index n, Index c) const {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }

  Vector& vec() { return data_; }
  const Vector& vec() const { return data_; }

  /// Channels x pixels view of sample n.
  MatrixMap matrix(Index n) { return MatrixMap(plane(n, 0), shape_.c, shape_.plane()); }
  ConstMatrixMap matrix(Index n) const {
    return ConstMatrixMap(plane(n, 0), shape_.c, shape_.plane());
  }

  Tensor reshaped(Shape shape) const {
    if (shape.size() != size()) throw std::invalid_argument("reshape: size mismatch");
    Tensor out = *this;
    out.shape_ = shape;
    return out;
  }

  /// Copy of sample n as a single-sample tensor.
  Tensor sample(Index n) const {
    Tensor out(Shape{1, shape_.c, shape_.h, shape_.w});
    out.vec() = data_.segment(n * out.size(), out.size());
    return out;
  }
  void set_sample(Index n, const Tensor& src) {
    if (src.size() * shape_.n != size()) throw std::invalid_argument("set_sample: shape mismatch");
    data_.segment(n * src.size(), src.size()) = src.vec();
  }

  void fill(Scalar v) { data_.setConstant(v); }
  void set_zero() { data_.setZero(); }

  bool all_finite() const { return data_.allFinite(); }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    out.vec() = data_.template cast<Other>();
    return out;
  }

 private:
  Shape shape_{0, 0, 0, 0};
  Vector data_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

/// Stack single-sample tensors along the batch axis.
template <typename Scalar>
Tensor<Scalar> stack(const std::vector<Tensor<Scalar>>& items) {
  require(!items.empty(), "stack: empty input");
  Shape s = items.front().shape();
  Tensor<Scalar> out(Shape{static_cast<Index>(items.size()) * s.n, s.c, s.h, s.w});
  for (std::size_t i = 0; i < items.size(); ++i) {
    require_same_shape(items[i].shape(), s, "stack");
    out.vec().segment(static_cast<Index>(i) * s.size(), s.size()) = items[i].vec();
  }
  return out;
}

/// Mirror along the width axis.
template <typename Scalar>
Tensor<Scalar> flip_width(const Tensor<Scalar>& in) {
  Tensor<Scalar> out(in.shape());
  const Index rows = in.n() * in.c() * in.h();
  const Index w = in.w();
  for (Index r = 0; r < rows; ++r) {
    const Scalar* src = in.data() + r * w;
    Scalar* dst = out.data() + r * w;
    for (Index x = 0; x < w; ++x) dst[x] = src[w - 1 - x];
  }
  return out;
}

}  // namespace sdfa
