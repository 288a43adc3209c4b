#include "geomask/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "geomask/image_io.hpp"
#include "geomask/random.hpp"

namespace geomask {

namespace {

// Soft inside-indicator of an ellipse in chest coordinates (t across, v up).
double ellipse(double t, double v, double t0, double v0, double at, double av, double soft) {
  const double r = std::hypot((t - t0) / at, (v - v0) / av);
  return std::clamp((1.0 - r) / soft + 0.5, 0.0, 1.0);
}

double band(double x, double lo, double hi, double soft) {
  return std::clamp((x - lo) / soft + 0.5, 0.0, 1.0) * std::clamp((hi - x) / soft + 0.5, 0.0, 1.0);
}

struct Layout {
  double cx, cy, theta, height, width;
};

Layout sample_layout(Rng& rng, int canvas) {
  const double n = canvas;
  for (;;) {
    Layout l;
    l.height = rng.uniform(0.50, 0.72) * n;
    l.width = l.height * rng.uniform(0.85, 1.15);
    l.cx = n / 2 + rng.uniform(-0.10, 0.10) * n;
    l.cy = n / 2 + rng.uniform(-0.10, 0.10) * n;
    l.theta = rng.uniform(-20.0, 20.0);
    const double r = radians(l.theta);
    const Point2d u(std::sin(r), -std::cos(r));
    const Point2d nn(std::cos(r), std::sin(r));
    const Point2d c(l.cx, l.cy);
    const Point2d pts[] = {c + l.height / 2 * u, c - l.height / 2 * u, c - l.width / 2 * nn, c + l.width / 2 * nn};
    bool inside = true;
    for (const auto& p : pts) inside = inside && p.x() >= 1 && p.y() >= 1 && p.x() <= n - 2 && p.y() <= n - 2;
    if (inside) return l;
  }
}

BoxList sample_boxes(Rng& rng, int canvas) {
  const double u = rng.uniform();
  const int count = u < 0.25 ? 0 : u < 0.60 ? 1 : u < 0.85 ? 2 : 3;
  BoxList boxes;
  const int n = canvas;
  int attempts = 0;
  while (static_cast<int>(boxes.size()) < count && attempts++ < 100) {
    const int bw = std::max(3, static_cast<int>(std::lround(rng.uniform(0.12, 0.30) * n)));
    const int bh = std::max(2, static_cast<int>(std::lround(rng.uniform(0.05, 0.10) * n)));
    // Near one of the four borders, like side markers and technique text.
    const int edge = static_cast<int>(rng.below(4));
    const int margin = std::max(1, static_cast<int>(std::lround(rng.uniform(0.01, 0.08) * n)));
    int x0, y0;
    if (edge < 2) {
      x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(n - bw - 1))) + 1;
      y0 = edge == 0 ? margin : n - margin - bh;
    } else {
      y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(n - bh - 1))) + 1;
      x0 = edge == 2 ? margin : n - margin - bw;
    }
    const Box b{double(x0), double(y0), double(x0 + bw), double(y0 + bh)};
    bool overlaps = false;
    for (const auto& o : boxes)
      overlaps = overlaps || (b.x0 < o.x1 + 1 && o.x0 < b.x1 + 1 && b.y0 < o.y1 + 1 && o.y0 < b.y1 + 1);
    if (!overlaps) boxes.push_back(b);
  }
  return boxes;
}

void render_anatomy(GrayImage& img, const Layout& l, Rng& rng) {
  const double r = radians(l.theta);
  const double st = std::sin(r), ct = std::cos(r);
  const double H = l.height, W = l.width;
  const double gain = rng.uniform(0.85, 1.15);
  const double heart_side = 1.0;  // always the image right, giving a left/right cue
  const double soft = 0.08;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double dx = x - l.cx, dy = y - l.cy;
      const double v = dx * st - dy * ct;  // up the chest axis
      const double t = dx * ct + dy * st;  // across, toward the image right
      double val = 0.05;
      const double body = std::max({ellipse(t, v, 0, -0.20 * H, 0.66 * W, 0.80 * H, soft),
                                    ellipse(t, v, 0, 0.47 * H, 0.72 * W, 0.10 * H, soft),
                                    ellipse(t, v, 0, 0.70 * H, 0.17 * W, 0.30 * H, soft)});
      val += 0.40 * body;
      const double lungs = std::max(ellipse(t, v, -0.24 * W, 0.03 * H, 0.22 * W, 0.46 * H, soft),
                                    ellipse(t, v, 0.24 * W, 0.03 * H, 0.22 * W, 0.46 * H, soft));
      val -= 0.28 * lungs * body;
      val += 0.18 * band(t, -0.06 * W, 0.06 * W, 0.6) * band(v, -0.55 * H, 0.50 * H, 0.6);
      val += 0.22 * ellipse(t, v, heart_side * 0.12 * W, -0.24 * H, 0.17 * W, 0.17 * H, soft);
      val += 0.18 * band(v, -1.2 * H, -0.47 * H - 0.05 * std::abs(t), 0.8) * body;
      for (double side : {-1.0, 1.0}) {
        const double tt = side * t;
        val += 0.15 * band(tt, 0.05 * W, 0.40 * W, 0.6) * band(v - 0.40 * H - 0.08 * tt, -0.6, 0.6, 0.6);
      }
      img(x, y) = static_cast<float>(gain * val);
    }
  }
}

void render_boxes(GrayImage& img, const BoxList& boxes, Rng& rng) {
  for (const auto& b : boxes) {
    const float base = static_cast<float>(rng.uniform(0.20, 0.35));
    const float ink = static_cast<float>(rng.uniform(0.85, 1.0));
    const std::uint64_t glyph_seed = rng.next();
    for (int y = static_cast<int>(b.y0); y < static_cast<int>(b.y1); ++y) {
      for (int x = static_cast<int>(b.x0); x < static_cast<int>(b.x1); ++x) {
        const int gx = x - static_cast<int>(b.x0), gy = y - static_cast<int>(b.y0);
        // 3 px glyph cells separated by 1 px gaps; stroke bits are hashed.
        const bool gap = gx % 4 == 3;
        const std::uint64_t h = splitmix64(glyph_seed ^ (static_cast<std::uint64_t>(gx / 4) << 20) ^
                                           static_cast<std::uint64_t>(gy * 4 + gx % 4));
        const bool stroke = !gap && (h & 3) != 0;
        img(x, y) = stroke ? ink : base;
      }
    }
  }
}

}  // namespace

std::string phantom_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ph%06zu", index);
  return buf;
}

Phantom generate_phantom(std::uint64_t seed, std::size_t index, int canvas) {
  Rng rng(mix_seed(seed, 0x70686e74ull, index));
  const Layout l = sample_layout(rng, canvas);
  Phantom p;
  p.spec.seed = seed;
  p.spec.canvas = canvas;
  p.spec.cx = l.cx;
  p.spec.cy = l.cy;
  p.spec.theta = l.theta;
  p.spec.height = l.height;
  p.spec.width = l.width;
  const double r = radians(l.theta);
  const Point2d u(std::sin(r), -std::cos(r));
  const Point2d n(std::cos(r), std::sin(r));
  const Point2d c(l.cx, l.cy);
  p.spec.landmarks = {c + l.height / 2 * u, c - l.height / 2 * u, c - l.width / 2 * n, c + l.width / 2 * n};
  p.spec.boxes = sample_boxes(rng, canvas);

  p.image = GrayImage(canvas, canvas);
  render_anatomy(p.image, l, rng);
  const float noise = static_cast<float>(rng.uniform(0.01, 0.03));
  for (int y = 0; y < canvas; ++y)
    for (int x = 0; x < canvas; ++x) p.image(x, y) += noise * static_cast<float>(rng.normal());
  render_boxes(p.image, p.spec.boxes, rng);
  p.image.pixels() = p.image.pixels().cwiseMax(0.0f).cwiseMin(1.0f);

  p.record.image_id = phantom_id(index);
  p.record.landmarks = p.spec.landmarks;
  p.record.boxes = p.spec.boxes;
  return p;
}

std::vector<Phantom> generate_phantoms(std::size_t count, std::uint64_t seed, int canvas) {
  std::vector<Phantom> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_phantom(seed, i, canvas));
  return out;
}

void write_phantom_corpus(const std::vector<Phantom>& phantoms, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "images");
  std::vector<LabelRecord> records;
  std::vector<ManifestEntry> manifest;
  for (const auto& p : phantoms) {
    const std::string rel = "images/" + p.record.image_id + ".png";
    write_image(p.image, out_dir / rel, BitDepth::Sixteen);
    records.push_back(p.record);
    manifest.push_back({p.record.image_id, "phantom", rel, "frontal", "available"});
  }
  write_labels(records, out_dir / "labels.jsonl");
  write_image_manifest(manifest, out_dir / "manifest.csv");
}

}  // namespace geomask
