#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "geomask/error.hpp"

namespace geomask {

using Shape4 = std::array<int, 4>;  // batch, channels, height, width

inline std::string to_string(const Shape4& s) {
  return "(" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + "," +
         std::to_string(s[3]) + ")";
}

/// Dense NCHW activation buffer.
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstPlaneMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() : shape_{0, 0, 0, 0} {}
  explicit Tensor(const Shape4& shape, Scalar fill = Scalar(0))
      : shape_(shape), data_(Vector::Constant(static_cast<Eigen::Index>(count(shape)), fill)) {}
  Tensor(int n, int c, int h, int w, Scalar fill = Scalar(0)) : Tensor(Shape4{n, c, h, w}, fill) {}

  static std::size_t count(const Shape4& s) {
    return static_cast<std::size_t>(s[0]) * s[1] * s[2] * s[3];
  }

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  std::size_t size() const { return static_cast<std::size_t>(data_.size()); }
  std::size_t plane_size() const { return static_cast<std::size_t>(shape_[2]) * shape_[3]; }
  std::size_t sample_size() const { return plane_size() * shape_[1]; }

  /// Resizes without preserving contents when the shape changes.
  void reshape_discard(const Shape4& s) {
    if (s != shape_ || static_cast<std::size_t>(data_.size()) != count(s)) {
      shape_ = s;
      data_.resize(static_cast<Eigen::Index>(count(s)));
    }
  }
  /// Reinterprets the buffer with an equal element count.
  void view_as(const Shape4& s) {
    if (count(s) != size()) throw Error(ErrorKind::ShapeMismatch, "view_as changes element count");
    shape_ = s;
  }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Vector& flat() { return data_; }
  const Vector& flat() const { return data_; }

  Scalar& operator()(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  Scalar operator()(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  /// Sample `n` as a channels x (h*w) row-major matrix.
  PlaneMap sample(int n) {
    return PlaneMap(data() + n * sample_size(), shape_[1], static_cast<Eigen::Index>(plane_size()));
  }
  ConstPlaneMap sample(int n) const {
    return ConstPlaneMap(data() + n * sample_size(), shape_[1], static_cast<Eigen::Index>(plane_size()));
  }

  void set_zero() { data_.setZero(); }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    out.flat() = data_.template cast<Other>();
    return out;
  }

 private:
  Eigen::Index index(int n, int c, int y, int x) const {
    return ((static_cast<Eigen::Index>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  }

  Shape4 shape_;
  Vector data_;
};

/// Trainable array with its gradient accumulator. Shapes follow the
/// (out, in, kh, kw) convention for convolutions and (out, in) for dense layers.
template <typename Scalar>
struct Parameter {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::string name;
  std::vector<std::int64_t> shape;
  Vector value;
  Vector grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<std::int64_t> s) : name(std::move(n)), shape(std::move(s)) {
    std::int64_t total = 1;
    for (auto d : shape) total *= d;
    value = Vector::Zero(total);
    grad = Vector::Zero(total);
  }

  Eigen::Index size() const { return value.size(); }
};

}  // namespace geomask
