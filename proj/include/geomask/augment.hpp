#pragma once

// Random similarity augmentation applied jointly to an image, its chest
// parameters and its annotation mask.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "geomask/geometry.hpp"
#include "geomask/random.hpp"
#include "geomask/raster.hpp"

namespace geomask {

struct AugmentConfig {
  std::uint64_t seed = 0;
  int multiplicity = 657;  // augmented copies per labeled source
  double rot_deg = 90.0;
  double scale_lo = 0.75;
  double scale_hi = 1.25;
  double trans_frac = 0.25;  // of the smaller image dimension
};

struct AugmentSpec {
  double rotation_deg = 0.0;
  double scale = 1.0;
  double translate_x = 0.0;
  double translate_y = 0.0;
};

/// Throws InvalidParams when a field leaves its configured closed range.
void validate(const AugmentSpec& spec, int w, int h, const AugmentConfig& cfg = {});

AugmentSpec sample_spec(Rng& rng, int w, int h, const AugmentConfig& cfg = {});

/// Generator dedicated to one (seed, source, epoch, replica) cell.
Rng spec_rng(std::uint64_t seed, const std::string& source_id, std::uint64_t epoch, std::uint64_t replica);

/// Rotation and scale about (w/2, h/2), then translation.
AffineTransform<double> spec_to_transform(const AugmentSpec& spec, int w, int h);

struct LabeledSource {
  std::string id;
  GrayImage image;
  SimilarityParams<double> params;
  BinaryMask mask;
  std::optional<LandmarkSet<double>> landmarks;
};

struct Provenance {
  std::string source_id;
  AugmentSpec spec;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t replica = 0;
};

struct AugmentedSample {
  GrayImage image;
  SimilarityParams<double> params;
  BinaryMask mask;
  std::optional<LandmarkSet<double>> landmarks;
  Provenance provenance;
};

AugmentedSample apply(const LabeledSource& source, const AugmentSpec& spec);

/// On-the-fly augmented view of a labeled corpus: index i addresses replica
/// (i % multiplicity) of source (i / multiplicity), regenerated per epoch.
class AugmentedDataset {
 public:
  AugmentedDataset(std::shared_ptr<const std::vector<LabeledSource>> sources, AugmentConfig cfg);

  std::size_t size() const { return sources_->size() * static_cast<std::size_t>(cfg_.multiplicity); }
  const AugmentConfig& config() const { return cfg_; }
  const std::vector<LabeledSource>& sources() const { return *sources_; }

  AugmentSpec spec(std::size_t index, std::uint64_t epoch) const;
  AugmentedSample get(std::size_t index, std::uint64_t epoch) const;

  /// Writes every sample of `epoch` as PNG image + mask and a JSONL label
  /// file; returns the number of samples written.
  std::size_t materialize(const std::filesystem::path& out_dir, std::uint64_t epoch = 0) const;

 private:
  std::shared_ptr<const std::vector<LabeledSource>> sources_;
  AugmentConfig cfg_;
};

}  // namespace geomask
