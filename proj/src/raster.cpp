#include "geomask/raster.hpp"

#include <cmath>

namespace geomask {

BinaryMask warp_mask(const BinaryMask& src, const AffineTransform<double>& t, int out_w, int out_h) {
  const AffineTransform<double> inv = invert(t);
  BinaryMask out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const double sx = inv.a() * x + inv.b() * y + inv.e();
      const double sy = inv.c() * x + inv.d() * y + inv.f();
      const int ix = static_cast<int>(std::floor(sx + 0.5));
      const int iy = static_cast<int>(std::floor(sy + 0.5));
      if (src.get_or_zero(ix, iy)) out.set(x, y, true);
    }
  }
  return out;
}

BinaryMask rasterize_boxes(const BoxList& boxes, int w, int h) {
  BinaryMask out(w, h);
  for (const Box& b : boxes) {
    // pixel center x is covered iff x0 <= x < x1
    const int xs = std::max(0, static_cast<int>(std::ceil(b.x0)));
    const int ys = std::max(0, static_cast<int>(std::ceil(b.y0)));
    const int xe = std::min(w, static_cast<int>(std::ceil(b.x1)));
    const int ye = std::min(h, static_cast<int>(std::ceil(b.y1)));
    if (xs >= xe || ys >= ye) continue;
    out.bits().block(ys, xs, ye - ys, xe - xs).setOnes();
  }
  return out;
}

AffineTransform<double> center_crop_transform(int w, int h, int out) {
  const int side = std::min(w, h);
  const double k = static_cast<double>(out) / side;
  const double x0 = (w - side) / 2.0;
  const double y0 = (h - side) / 2.0;
  // q = k (p - origin + 0.5) - 0.5
  return {k, 0.0, 0.0, k, k * (0.5 - x0) - 0.5, k * (0.5 - y0) - 0.5};
}

}  // namespace geomask
