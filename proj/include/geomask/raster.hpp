#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "geomask/error.hpp"
#include "geomask/geometry.hpp"

namespace geomask {

/// Row-major single-channel raster. Intensities live in [0, 1].
template <typename Scalar>
class Image {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Image() = default;
  Image(int width, int height, Scalar fill = Scalar(0)) : pixels_(Array::Constant(height, width, fill)) {
    if (width < 1 || height < 1) throw Error(ErrorKind::ShapeMismatch, "image dimensions must be >= 1");
  }
  explicit Image(Array pixels) : pixels_(std::move(pixels)) {}

  int width() const { return static_cast<int>(pixels_.cols()); }
  int height() const { return static_cast<int>(pixels_.rows()); }
  bool empty() const { return pixels_.size() == 0; }

  Scalar& operator()(int x, int y) { return pixels_(y, x); }
  Scalar operator()(int x, int y) const { return pixels_(y, x); }

  /// Zero outside the raster.
  Scalar at_or_zero(int x, int y) const {
    if (x < 0 || y < 0 || x >= width() || y >= height()) return Scalar(0);
    return pixels_(y, x);
  }

  Array& pixels() { return pixels_; }
  const Array& pixels() const { return pixels_; }
  const Scalar* data() const { return pixels_.data(); }
  Scalar* data() { return pixels_.data(); }

  bool operator==(const Image& o) const {
    return width() == o.width() && height() == o.height() && (pixels_ == o.pixels_).all();
  }

 private:
  Array pixels_;
};

using GrayImage = Image<float>;

class BinaryMask {
 public:
  using Array = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  BinaryMask() = default;
  BinaryMask(int width, int height) : bits_(Array::Zero(height, width)) {
    if (width < 1 || height < 1) throw Error(ErrorKind::ShapeMismatch, "mask dimensions must be >= 1");
  }

  int width() const { return static_cast<int>(bits_.cols()); }
  int height() const { return static_cast<int>(bits_.rows()); }

  bool get(int x, int y) const { return bits_(y, x) != 0; }
  void set(int x, int y, bool v) { bits_(y, x) = v ? 1 : 0; }
  bool get_or_zero(int x, int y) const {
    if (x < 0 || y < 0 || x >= width() || y >= height()) return false;
    return bits_(y, x) != 0;
  }

  long count() const { return static_cast<long>((bits_ != 0).count()); }
  const Array& bits() const { return bits_; }
  Array& bits() { return bits_; }

  BinaryMask complement() const {
    BinaryMask out = *this;
    out.bits_ = (bits_ == 0).cast<std::uint8_t>();
    return out;
  }

  bool operator==(const BinaryMask& o) const {
    return width() == o.width() && height() == o.height() && (bits_ == o.bits_).all();
  }

 private:
  Array bits_;
};

/// Half-open box [x0, x1) x [y0, y1) in pixel coordinates.
struct Box {
  double x0{0}, y0{0}, x1{0}, y1{0};
  bool operator==(const Box&) const = default;
};

using BoxList = std::vector<Box>;

/// Bilinear sample with zero-valued taps outside the raster.
template <typename Scalar>
double sample_bilinear(const Image<Scalar>& src, double x, double y) {
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const double wx = x - fx0;
  const double wy = y - fy0;
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  double acc = 0.0;
  if (wx == 0.0 && wy == 0.0) return static_cast<double>(src.at_or_zero(x0, y0));
  acc += (1.0 - wx) * (1.0 - wy) * src.at_or_zero(x0, y0);
  acc += wx * (1.0 - wy) * src.at_or_zero(x0 + 1, y0);
  acc += (1.0 - wx) * wy * src.at_or_zero(x0, y0 + 1);
  acc += wx * wy * src.at_or_zero(x0 + 1, y0 + 1);
  return acc;
}

/// Inverse-mapped warp: out(q) = bilinear(src, t^-1(q)), zero fill.
template <typename Scalar>
Image<Scalar> warp_image(const Image<Scalar>& src, const AffineTransform<double>& t, int out_w, int out_h) {
  const AffineTransform<double> inv = invert(t);
  Image<Scalar> out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const double sx = inv.a() * x + inv.b() * y + inv.e();
      const double sy = inv.c() * x + inv.d() * y + inv.f();
      const double v = sample_bilinear(src, sx, sy);
      out(x, y) = static_cast<Scalar>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

/// Nearest-neighbor mask warp with the decision taken at output pixel centers.
BinaryMask warp_mask(const BinaryMask& src, const AffineTransform<double>& t, int out_w, int out_h);

/// Bit set iff the pixel center lies in at least one (clamped) box.
BinaryMask rasterize_boxes(const BoxList& boxes, int w, int h);

/// Transform taking the central min(w,h) square of a w x h raster onto an
/// out x out raster, pixel areas aligned.
AffineTransform<double> center_crop_transform(int w, int h, int out);

template <typename Scalar>
Image<Scalar> center_crop_scale(const Image<Scalar>& src, int out) {
  if (src.empty()) throw Error(ErrorKind::ShapeMismatch, "center_crop_scale of an empty image");
  return warp_image(src, center_crop_transform(src.width(), src.height(), out), out, out);
}

}  // namespace geomask
