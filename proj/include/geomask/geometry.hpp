#pragma once

// 2-D similarity geometry for chest normalization.
//
// Coordinates: x grows rightward, y grows downward, origin at the center of
// the top-left pixel. A chest is summarized by SimilarityParams: its center,
// the signed tilt of its vertical axis (degrees, positive when the top
// landmark sits at larger x than the bottom one) and its size in pixels.

#include <cmath>
#include <numbers>

#include <Eigen/Core>
#include <Eigen/LU>

#include "geomask/error.hpp"

namespace geomask {

template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;

template <typename Scalar>
struct LandmarkSet {
  Point2<Scalar> top;     // thoracic inlet
  Point2<Scalar> bottom;  // chest center at diaphragm level
  Point2<Scalar> left;    // lateral ribcage, mid-thoracic
  Point2<Scalar> right;
};

template <typename Scalar>
struct SimilarityParams {
  Scalar cx{0};
  Scalar cy{0};
  Scalar theta{0};  // degrees, (-180, 180]
  Scalar size{1};   // pixels, > 0

  Point2<Scalar> center() const { return {cx, cy}; }
};

/// p' = (a*x + b*y + e, c*x + d*y + f), stored as the 2x3 matrix [a b e; c d f].
template <typename Scalar>
class AffineTransform {
 public:
  using Matrix = Eigen::Matrix<Scalar, 2, 3>;

  AffineTransform() : m_(Matrix::Zero()) {
    m_(0, 0) = 1;
    m_(1, 1) = 1;
  }
  explicit AffineTransform(const Matrix& m) : m_(m) {}
  AffineTransform(Scalar a, Scalar b, Scalar c, Scalar d, Scalar e, Scalar f) {
    m_ << a, b, e, c, d, f;
  }

  static AffineTransform identity() { return AffineTransform(); }
  static AffineTransform translation(Scalar tx, Scalar ty) { return {1, 0, 0, 1, tx, ty}; }
  /// Rotation by `degrees` (x toward y) and isotropic `scale` about `pivot`.
  static AffineTransform similarity_about(Scalar degrees, Scalar scale, const Point2<Scalar>& pivot) {
    const Scalar r = degrees * std::numbers::pi_v<Scalar> / Scalar(180);
    const Scalar ca = scale * std::cos(r);
    const Scalar sa = scale * std::sin(r);
    // p' = L (p - pivot) + pivot
    return {ca, -sa, sa, ca, pivot.x() - (ca * pivot.x() - sa * pivot.y()),
            pivot.y() - (sa * pivot.x() + ca * pivot.y())};
  }

  Scalar a() const { return m_(0, 0); }
  Scalar b() const { return m_(0, 1); }
  Scalar c() const { return m_(1, 0); }
  Scalar d() const { return m_(1, 1); }
  Scalar e() const { return m_(0, 2); }
  Scalar f() const { return m_(1, 2); }

  const Matrix& matrix() const { return m_; }
  Eigen::Matrix<Scalar, 2, 2> linear() const { return m_.template leftCols<2>(); }
  Point2<Scalar> offset() const { return m_.col(2); }
  Eigen::Matrix<Scalar, 3, 3> homogeneous() const {
    Eigen::Matrix<Scalar, 3, 3> h = Eigen::Matrix<Scalar, 3, 3>::Identity();
    h.template topRows<2>() = m_;
    return h;
  }

  Scalar determinant() const { return a() * d() - b() * c(); }

  Point2<Scalar> operator()(const Point2<Scalar>& p) const { return linear() * p + offset(); }

  template <typename Other>
  AffineTransform<Other> cast() const {
    return AffineTransform<Other>(m_.template cast<Other>());
  }

 private:
  Matrix m_;
};

using Point2d = Point2<double>;
using LandmarkSetd = LandmarkSet<double>;
using SimilarityParamsd = SimilarityParams<double>;
using AffineTransformd = AffineTransform<double>;

template <typename Scalar>
constexpr Scalar degrees(Scalar radians) {
  return radians * Scalar(180) / std::numbers::pi_v<Scalar>;
}

template <typename Scalar>
constexpr Scalar radians(Scalar deg) {
  return deg * std::numbers::pi_v<Scalar> / Scalar(180);
}

/// Wraps an angle in degrees into (-180, 180].
template <typename Scalar>
Scalar wrap_degrees(Scalar deg) {
  Scalar w = std::fmod(deg, Scalar(360));
  if (w <= Scalar(-180)) w += Scalar(360);
  if (w > Scalar(180)) w -= Scalar(360);
  return w;
}

template <typename Scalar>
bool is_finite(const Point2<Scalar>& p) {
  return std::isfinite(p.x()) && std::isfinite(p.y());
}

template <typename Scalar>
void validate(const LandmarkSet<Scalar>& lm) {
  if (!is_finite(lm.top) || !is_finite(lm.bottom) || !is_finite(lm.left) || !is_finite(lm.right))
    throw Error(ErrorKind::DegenerateLandmarks, "landmark coordinates must be finite");
  if (lm.top == lm.bottom) throw Error(ErrorKind::DegenerateLandmarks, "top and bottom coincide");
  if (lm.left == lm.right) throw Error(ErrorKind::DegenerateLandmarks, "left and right coincide");
}

template <typename Scalar>
void validate(const SimilarityParams<Scalar>& p) {
  if (!std::isfinite(p.cx) || !std::isfinite(p.cy) || !std::isfinite(p.theta) || !std::isfinite(p.size))
    throw Error(ErrorKind::InvalidParams, "similarity parameters must be finite");
  if (!(p.size > 0)) throw Error(ErrorKind::InvalidParams, "size must be positive");
  if (!(p.theta > Scalar(-180) && p.theta <= Scalar(180)))
    throw Error(ErrorKind::InvalidParams, "theta must lie in (-180, 180]");
}

/// Center is the top/bottom midpoint; theta is the tilt of the top-bottom axis
/// from image vertical; size is the larger of the axis length and the
/// left-right extent measured across the axis.
template <typename Scalar>
SimilarityParams<Scalar> params_from_landmarks(const LandmarkSet<Scalar>& lm) {
  validate(lm);
  const Point2<Scalar> axis = lm.top - lm.bottom;
  const Scalar height = axis.norm();
  const Point2<Scalar> normal = Point2<Scalar>(-axis.y(), axis.x()) / height;
  const Scalar width = std::abs((lm.right - lm.left).dot(normal));

  SimilarityParams<Scalar> p;
  const Point2<Scalar> mid = (lm.top + lm.bottom) / Scalar(2);
  p.cx = mid.x();
  p.cy = mid.y();
  p.theta = wrap_degrees(degrees(std::atan2(axis.x(), -axis.y())));
  p.size = std::max(height, width);
  if (!(p.size > 0)) throw Error(ErrorKind::DegenerateLandmarks, "derived size is zero");
  return p;
}

/// result(p) == a(b(p))
template <typename Scalar>
AffineTransform<Scalar> compose(const AffineTransform<Scalar>& a, const AffineTransform<Scalar>& b) {
  typename AffineTransform<Scalar>::Matrix m;
  m.template leftCols<2>() = a.linear() * b.linear();
  m.col(2) = a.linear() * b.offset() + a.offset();
  return AffineTransform<Scalar>(m);
}

template <typename Scalar>
AffineTransform<Scalar> invert(const AffineTransform<Scalar>& t) {
  const Scalar det = t.determinant();
  if (det == Scalar(0) || !std::isfinite(det))
    throw Error(ErrorKind::SingularTransform, "transform determinant is zero");
  const Eigen::Matrix<Scalar, 2, 2> inv = t.linear().inverse();
  typename AffineTransform<Scalar>::Matrix m;
  m.template leftCols<2>() = inv;
  m.col(2) = -inv * t.offset();
  return AffineTransform<Scalar>(m);
}

template <typename Scalar>
bool is_similarity(const AffineTransform<Scalar>& t, Scalar rel_tol = Scalar(1e-9)) {
  const Scalar scale = std::hypot(t.a(), t.c());
  if (!(scale > 0)) return false;
  return std::abs(t.a() - t.d()) <= rel_tol * scale && std::abs(t.b() + t.c()) <= rel_tol * scale;
}

template <typename Scalar>
Scalar similarity_scale(const AffineTransform<Scalar>& t) {
  return std::hypot(t.a(), t.c());
}

/// Rotation angle of a similarity in degrees; adding it to a theta gives the
/// theta of the transformed chest.
template <typename Scalar>
Scalar similarity_rotation(const AffineTransform<Scalar>& t) {
  return degrees(std::atan2(t.c(), t.a()));
}

/// Fraction of the canvas width the chest's larger dimension fills after alignment.
inline constexpr double kAlignedFraction = 0.9;

/// Maps the predicted center to the canvas center, the chest's larger
/// dimension to 90% of the canvas width and its vertical axis to upright.
template <typename Scalar>
AffineTransform<Scalar> alignment_from_params(const SimilarityParams<Scalar>& p, int canvas_w, int canvas_h) {
  if (canvas_w != canvas_h || canvas_w <= 0)
    throw Error(ErrorKind::NonSquareCanvas, "alignment requires a square canvas");
  validate(p);
  const Scalar s = Scalar(kAlignedFraction) * Scalar(canvas_w) / p.size;
  const Scalar r = radians(-p.theta);
  const Scalar ca = s * std::cos(r);
  const Scalar sa = s * std::sin(r);
  const Point2<Scalar> half(Scalar(canvas_w) / 2, Scalar(canvas_h) / 2);
  // A(q) = L (q - center) + half
  return {ca, -sa, sa, ca, half.x() - (ca * p.cx - sa * p.cy), half.y() - (sa * p.cx + ca * p.cy)};
}

/// Parameters of the chest after the similarity `t` is applied to the image.
template <typename Scalar>
SimilarityParams<Scalar> push_forward_params(const AffineTransform<Scalar>& t, const SimilarityParams<Scalar>& p) {
  if (!is_similarity(t)) throw Error(ErrorKind::NotASimilarity, "push-forward requires a similarity transform");
  const Point2<Scalar> c = t(p.center());
  SimilarityParams<Scalar> out;
  out.cx = c.x();
  out.cy = c.y();
  out.theta = wrap_degrees(p.theta + similarity_rotation(t));
  out.size = similarity_scale(t) * p.size;
  return out;
}

template <typename Scalar>
LandmarkSet<Scalar> transform_landmarks(const AffineTransform<Scalar>& t, const LandmarkSet<Scalar>& lm) {
  return {t(lm.top), t(lm.bottom), t(lm.left), t(lm.right)};
}

/// Parameters whose alignment transform is the identity on an n x n canvas.
template <typename Scalar>
SimilarityParams<Scalar> canonical_params(int canvas) {
  return {Scalar(canvas) / 2, Scalar(canvas) / 2, Scalar(0), Scalar(0.9) * Scalar(canvas)};
}

}  // namespace geomask
