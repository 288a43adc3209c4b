#include "geomask/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <thread>

#include <json.hpp>

#include "geomask/error.hpp"
#include "geomask/image_io.hpp"
#include "geomask/train.hpp"

namespace geomask {

namespace fs = std::filesystem;

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t count = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (count <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < count; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

LabeledSource to_source(const std::string& id, GrayImage image, const LabelRecord& record) {
  if (!record.landmarks) throw Error(ErrorKind::SchemaViolation, id + ": record has no landmarks");
  LabeledSource s;
  s.id = id;
  s.params = params_from_landmarks(*record.landmarks);
  s.mask = rasterize_boxes(record.boxes, image.width(), image.height());
  s.landmarks = record.landmarks;
  s.image = std::move(image);
  return s;
}

std::vector<LabeledSource> load_labeled_sources(const std::vector<ManifestEntry>& entries, const fs::path& root,
                                                const std::vector<LabelRecord>& labels) {
  std::map<std::string, const ManifestEntry*> by_id;
  for (const auto& e : entries) by_id[e.image_id] = &e;
  std::vector<LabeledSource> out;
  for (const auto& r : labels) {
    if (r.excluded) continue;
    auto it = by_id.find(r.image_id);
    if (it == by_id.end()) throw Error(ErrorKind::SchemaViolation, "label " + r.image_id + " has no manifest entry");
    out.push_back(to_source(r.image_id, read_image(root / it->second->path), r));
  }
  return out;
}

SimilarityParams<double> clamp_prediction(SimilarityParams<double> p, int extent) {
  const double n = extent;
  if (!std::isfinite(p.cx)) p.cx = n / 2;
  if (!std::isfinite(p.cy)) p.cy = n / 2;
  p.theta = std::isfinite(p.theta) ? wrap_degrees(p.theta) : 0.0;
  p.size = std::isfinite(p.size) ? std::clamp(p.size, 1.0, 4.0 * n) : 0.9 * n;
  return p;
}

namespace {

// Maps source pixels onto the network raster, pixel areas aligned per axis.
AffineTransform<double> to_network(int w, int h, int n) {
  const double kx = static_cast<double>(n) / w, ky = static_cast<double>(n) / h;
  return {kx, 0, 0, ky, 0.5 * kx - 0.5, 0.5 * ky - 0.5};
}

}  // namespace

Prediction predict(const YNet<float>& model, const std::string& id, const GrayImage& image) {
  const int n = model.config().input_size;
  const int w = image.width(), h = image.height();
  const bool direct = w == n && h == n;
  const AffineTransform<double> fwd = to_network(w, h, n);
  const GrayImage net_in = direct ? image : warp_image(image, fwd, n, n);

  const Tensor<float> x = image_tensor<float>({&net_in});
  const NetOutput<float> out = model.forward(x);
  const std::array<double, 4> g{out.geo(0, 0, 0, 0), out.geo(0, 1, 0, 0), out.geo(0, 2, 0, 0), out.geo(0, 3, 0, 0)};
  SimilarityParams<double> net = decode_geometry(g, n, n);

  Prediction p;
  p.id = id;
  if (direct) {
    p.params = net;
  } else {
    const Point2d c = invert(fwd)(Point2d(net.cx, net.cy));
    p.params = {c.x(), c.y(), net.theta, net.size * static_cast<double>(w) / n};
  }
  p.params = clamp_prediction(p.params, std::max(w, h));

  const BinaryMask net_mask = threshold_logits(out.seg_logits.data(), n, n);
  p.mask = direct ? net_mask : warp_mask(net_mask, invert(fwd), w, h);
  return p;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_failures(const std::vector<BatchFailure>& failures, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out << "id,error\n";
  for (const auto& f : failures) {
    std::string msg = f.error;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out << f.id << ',' << msg << '\n';
  }
}

template <typename Work>
BatchSummary run_batch(const std::vector<ManifestEntry>& entries, int workers, Work work) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::string> errors(entries.size());
  std::vector<char> ok(entries.size(), 0);
  parallel_for(entries.size(), workers, [&](std::size_t i) {
    try {
      work(i);
      ok[i] = 1;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  BatchSummary s;
  s.inputs = entries.size();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (ok[i]) s.written.push_back(entries[i].image_id);
    else s.failures.push_back({entries[i].image_id, errors[i]});
  }
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return s;
}

}  // namespace

BatchSummary preprocess_batch(const YNet<float>& model, const std::vector<ManifestEntry>& entries, const fs::path& root,
                              const fs::path& out_dir, const PreprocessOptions& opt) {
  for (const char* sub : {"aligned", "aligned_masks", "masks", "sidecars"}) fs::create_directories(out_dir / sub);
  std::vector<Prediction> preds(entries.size());
  BatchSummary s = run_batch(entries, opt.workers, [&](std::size_t i) {
    const ManifestEntry& e = entries[i];
    const GrayImage src = read_image(root / e.path);
    Prediction p = predict(model, e.image_id, src);
    const AffineTransform<double> align = alignment_from_params(p.params, opt.canvas, opt.canvas);
    write_image(warp_image(src, align, opt.canvas, opt.canvas), out_dir / "aligned" / (e.image_id + ".png"),
                BitDepth::Sixteen);
    write_mask(warp_mask(p.mask, align, opt.canvas, opt.canvas), out_dir / "aligned_masks" / (e.image_id + ".png"));
    write_mask(p.mask, out_dir / "masks" / (e.image_id + ".png"));

    nlohmann::ordered_json side;
    side["source_id"] = e.image_id;
    side["source_path"] = e.path;
    side["checkpoint_hash"] = opt.checkpoint_hash;
    side["config_hash"] = opt.config_hash;
    side["canvas"] = opt.canvas;
    side["params"] = {{"cx", p.params.cx}, {"cy", p.params.cy}, {"theta", p.params.theta}, {"size", p.params.size}};
    std::ofstream(out_dir / "sidecars" / (e.image_id + ".json")) << side.dump(2) << '\n';
    preds[i] = std::move(p);
  });
  std::vector<Prediction> written;
  for (auto& p : preds)
    if (!p.id.empty()) written.push_back(std::move(p));
  write_predictions_csv(written, out_dir / "predictions.csv");
  write_failures(s.failures, out_dir / "failures.csv");
  return s;
}

BatchSummary make_controls(const std::vector<ManifestEntry>& entries, const fs::path& root, const fs::path& out_dir,
                           int canvas, int workers) {
  if (entries.empty()) return {};
  fs::create_directories(out_dir / "controls");
  BatchSummary s = run_batch(entries, workers, [&](std::size_t i) {
    const GrayImage src = read_image(root / entries[i].path);
    write_image(center_crop_scale(src, canvas), out_dir / "controls" / (entries[i].image_id + ".png"),
                BitDepth::Sixteen);
  });
  write_failures(s.failures, out_dir / "control_failures.csv");
  return s;
}

void write_predictions_csv(const std::vector<Prediction>& preds, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out << "id,cx,cy,theta,size\n";
  for (const auto& p : preds)
    out << p.id << ',' << format_double(p.params.cx) << ',' << format_double(p.params.cy) << ','
        << format_double(p.params.theta) << ',' << format_double(p.params.size) << '\n';
}

std::vector<Prediction> read_predictions_csv(const fs::path& path, const fs::path& mask_dir) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("id,cx,cy,theta,size", 0) != 0)
    throw Error(ErrorKind::SchemaViolation, path.string() + ":1: expected header id,cx,cy,theta,size");
  std::vector<Prediction> out;
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    Prediction p;
    char id[256];
    if (std::sscanf(line.c_str(), "%255[^,],%lf,%lf,%lf,%lf", id, &p.params.cx, &p.params.cy, &p.params.theta,
                    &p.params.size) != 5)
      throw Error(ErrorKind::SchemaViolation, path.string() + ":" + std::to_string(n) + ": malformed row");
    p.id = id;
    if (!mask_dir.empty()) p.mask = read_mask(mask_dir / (p.id + ".png"));
    out.push_back(std::move(p));
  }
  return out;
}

ImageVerdict grade_experimental(const GradingInputs& in, const Prediction& pred, int canvas, const GeometryRules& geo,
                                const MaskRules& mask) {
  const LabelRecord& t = *in.truth;
  if (!t.landmarks) throw Error(ErrorKind::SchemaViolation, t.image_id + ": cannot grade without landmarks");
  const GeometryTruth truth{params_from_landmarks(*t.landmarks), *t.landmarks};
  const BinaryMask truth_mask = rasterize_boxes(t.boxes, in.src_w, in.src_h);
  return make_verdict(t.image_id, "experimental", check_geometry(pred.params, truth, canvas, geo),
                      check_mask(pred.mask, truth_mask, mask));
}

ImageVerdict grade_control(const GradingInputs& in, int canvas, const GeometryRules& geo, const MaskRules& mask) {
  const LabelRecord& t = *in.truth;
  if (!t.landmarks) throw Error(ErrorKind::SchemaViolation, t.image_id + ": cannot grade without landmarks");
  const AffineTransform<double> crop = center_crop_transform(in.src_w, in.src_h, canvas);
  const LandmarkSet<double> lm = transform_landmarks(crop, *t.landmarks);
  const GeometryTruth truth{push_forward_params(crop, params_from_landmarks(*t.landmarks)), lm};
  const BinaryMask truth_mask = warp_mask(rasterize_boxes(t.boxes, in.src_w, in.src_h), crop, canvas, canvas);
  return make_verdict(t.image_id, "control", check_geometry(canonical_params<double>(canvas), truth, canvas, geo),
                      check_mask(BinaryMask(canvas, canvas), truth_mask, mask));
}

}  // namespace geomask
