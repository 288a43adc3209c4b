#include "geomask/augment.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "geomask/image_io.hpp"

namespace geomask {

void validate(const AugmentSpec& spec, int w, int h, const AugmentConfig& cfg) {
  const double t = cfg.trans_frac * std::min(w, h);
  const bool ok = std::abs(spec.rotation_deg) <= cfg.rot_deg && spec.scale >= cfg.scale_lo &&
                  spec.scale <= cfg.scale_hi && std::abs(spec.translate_x) <= t && std::abs(spec.translate_y) <= t;
  if (!ok) throw Error(ErrorKind::InvalidParams, "augment spec outside configured ranges");
}

AugmentSpec sample_spec(Rng& rng, int w, int h, const AugmentConfig& cfg) {
  const double t = cfg.trans_frac * std::min(w, h);
  AugmentSpec s;
  s.rotation_deg = rng.uniform(-cfg.rot_deg, cfg.rot_deg);
  s.scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
  s.translate_x = rng.uniform(-t, t);
  s.translate_y = rng.uniform(-t, t);
  return s;
}

Rng spec_rng(std::uint64_t seed, const std::string& source_id, std::uint64_t epoch, std::uint64_t replica) {
  return Rng(mix_seed(seed, fnv1a64(source_id), epoch, replica));
}

AffineTransform<double> spec_to_transform(const AugmentSpec& spec, int w, int h) {
  const AffineTransform<double> about =
      AffineTransform<double>::similarity_about(spec.rotation_deg, spec.scale, Point2d(w / 2.0, h / 2.0));
  return compose(AffineTransform<double>::translation(spec.translate_x, spec.translate_y), about);
}

AugmentedSample apply(const LabeledSource& source, const AugmentSpec& spec) {
  const int w = source.image.width();
  const int h = source.image.height();
  const AffineTransform<double> t = spec_to_transform(spec, w, h);
  AugmentedSample out;
  out.image = warp_image(source.image, t, w, h);
  out.mask = warp_mask(source.mask, t, w, h);
  out.params = push_forward_params(t, source.params);
  if (source.landmarks) out.landmarks = transform_landmarks(t, *source.landmarks);
  out.provenance.source_id = source.id;
  out.provenance.spec = spec;
  return out;
}

AugmentedDataset::AugmentedDataset(std::shared_ptr<const std::vector<LabeledSource>> sources, AugmentConfig cfg)
    : sources_(std::move(sources)), cfg_(cfg) {
  if (!sources_) throw Error(ErrorKind::InvalidConfig, "augmented dataset needs a source list");
  if (cfg_.multiplicity < 1) throw Error(ErrorKind::InvalidConfig, "aug.multiplicity must be >= 1");
  if (!(cfg_.scale_lo > 0 && cfg_.scale_lo <= cfg_.scale_hi))
    throw Error(ErrorKind::InvalidConfig, "aug.scale_lo/hi must satisfy 0 < lo <= hi");
  if (cfg_.rot_deg < 0 || cfg_.trans_frac < 0)
    throw Error(ErrorKind::InvalidConfig, "aug.rot_deg and aug.trans_frac must be non-negative");
}

AugmentSpec AugmentedDataset::spec(std::size_t index, std::uint64_t epoch) const {
  const auto m = static_cast<std::size_t>(cfg_.multiplicity);
  const LabeledSource& src = (*sources_)[index / m];
  Rng rng = spec_rng(cfg_.seed, src.id, epoch, index % m);
  return sample_spec(rng, src.image.width(), src.image.height(), cfg_);
}

AugmentedSample AugmentedDataset::get(std::size_t index, std::uint64_t epoch) const {
  if (index >= size()) throw Error(ErrorKind::ShapeMismatch, "augmented index out of range");
  const auto m = static_cast<std::size_t>(cfg_.multiplicity);
  AugmentedSample s = apply((*sources_)[index / m], spec(index, epoch));
  s.provenance.seed = cfg_.seed;
  s.provenance.epoch = epoch;
  s.provenance.replica = index % m;
  return s;
}

std::size_t AugmentedDataset::materialize(const std::filesystem::path& out_dir, std::uint64_t epoch) const {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");
  std::ofstream labels(out_dir / "augmented.jsonl");
  if (!labels) throw Error(ErrorKind::IoFailure, "cannot write " + (out_dir / "augmented.jsonl").string());
  for (std::size_t i = 0; i < size(); ++i) {
    const AugmentedSample s = get(i, epoch);
    char name[64];
    std::snprintf(name, sizeof(name), "%s_e%llu_r%04llu", s.provenance.source_id.c_str(),
                  static_cast<unsigned long long>(epoch), static_cast<unsigned long long>(s.provenance.replica));
    write_image(s.image, out_dir / "images" / (std::string(name) + ".png"));
    write_mask(s.mask, out_dir / "masks" / (std::string(name) + ".png"));
    nlohmann::ordered_json j;
    j["id"] = name;
    j["source_id"] = s.provenance.source_id;
    j["seed"] = s.provenance.seed;
    j["epoch"] = s.provenance.epoch;
    j["replica"] = s.provenance.replica;
    j["spec"] = {s.provenance.spec.rotation_deg, s.provenance.spec.scale, s.provenance.spec.translate_x,
                 s.provenance.spec.translate_y};
    j["params"] = {s.params.cx, s.params.cy, s.params.theta, s.params.size};
    if (s.landmarks) {
      const auto& lm = *s.landmarks;
      j["landmarks"] = {{"top", {lm.top.x(), lm.top.y()}},
                        {"bottom", {lm.bottom.x(), lm.bottom.y()}},
                        {"left", {lm.left.x(), lm.left.y()}},
                        {"right", {lm.right.x(), lm.right.y()}}};
    }
    labels << j.dump() << '\n';
  }
  return size();
}

}  // namespace geomask
