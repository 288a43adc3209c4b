#pragma once

// Independent reference implementations used by the tests. Written from the
// definitions, sharing no code with the library.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace oracle {

constexpr double kPi = 3.14159265358979323846;

struct Pt {
  double x, y;
};

// Landmark geometry by hand: center = top/bottom midpoint, theta from the
// top-bottom axis, size = max(axis length, width across the axis).
struct Params {
  double cx, cy, theta, size;
};

inline double wrap(double deg) {
  double d = std::fmod(deg, 360.0);
  if (d <= -180.0) d += 360.0;
  if (d > 180.0) d -= 360.0;
  return d;
}

inline Params params(Pt top, Pt bottom, Pt left, Pt right) {
  const double ax = top.x - bottom.x, ay = top.y - bottom.y;
  const double h = std::sqrt(ax * ax + ay * ay);
  const double nx = -ay / h, ny = ax / h;
  const double w = std::fabs((right.x - left.x) * nx + (right.y - left.y) * ny);
  return {(top.x + bottom.x) / 2, (top.y + bottom.y) / 2, wrap(std::atan2(ax, -ay) * 180 / kPi), h > w ? h : w};
}

// Row-major 2x3 affine applied to a point.
struct Aff {
  double a, b, c, d, e, f;
  Pt operator()(Pt p) const { return {a * p.x + b * p.y + e, c * p.x + d * p.y + f}; }
};

// Scalar bilinear reference: inverse-map each pixel center, zero outside.
inline std::vector<double> warp(const std::vector<double>& src, int w, int h, const Aff& fwd, int ow, int oh) {
  const double det = fwd.a * fwd.d - fwd.b * fwd.c;
  const Aff inv{fwd.d / det,
                -fwd.b / det,
                -fwd.c / det,
                fwd.a / det,
                (fwd.b * fwd.f - fwd.d * fwd.e) / det,
                (fwd.c * fwd.e - fwd.a * fwd.f) / det};
  auto px = [&](int x, int y) { return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0 : src[y * w + x]; };
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const Pt s = inv({double(x), double(y)});
      const int x0 = static_cast<int>(std::floor(s.x)), y0 = static_cast<int>(std::floor(s.y));
      const double fx = s.x - x0, fy = s.y - y0;
      double v = (1 - fx) * (1 - fy) * px(x0, y0) + fx * (1 - fy) * px(x0 + 1, y0) + (1 - fx) * fy * px(x0, y0 + 1) +
                 fx * fy * px(x0 + 1, y0 + 1);
      out[y * ow + x] = v < 0 ? 0 : (v > 1 ? 1 : v);
    }
  return out;
}

// 2x2 chi-square in closed form: N (ad - bc)^2 / (r1 r2 c1 c2).
inline double chisq(double a, double b, double c, double d) {
  const double n = a + b + c + d;
  return n * (a * d - b * c) * (a * d - b * c) / ((a + b) * (c + d) * (a + c) * (b + d));
}

// Y-Net parameter count from layer arithmetic.
inline std::int64_t conv_params(std::int64_t in, std::int64_t out, std::int64_t k) { return out * in * k * k + out; }

inline std::filesystem::path temp_dir(const std::string& tag) {
  std::random_device rd;
  auto p = std::filesystem::temp_directory_path() / ("geomask_" + tag + "_" + std::to_string(rd()));
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace oracle
