#pragma once

// Batch alignment and masking of a labeled or unlabeled corpus, control
// generation and automatic grading of the two cohorts.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "geomask/augment.hpp"
#include "geomask/evaluate.hpp"
#include "geomask/labels.hpp"
#include "geomask/ynet.hpp"

namespace geomask {

/// Sources for training: image read from the manifest path, params from the
/// landmarks, mask rasterized from the boxes. Records without an image are
/// an error; images without a usable record are skipped.
std::vector<LabeledSource> load_labeled_sources(const std::vector<ManifestEntry>& entries,
                                                const std::filesystem::path& root,
                                                const std::vector<LabelRecord>& labels);

LabeledSource to_source(const std::string& id, GrayImage image, const LabelRecord& record);

struct Prediction {
  std::string id;
  SimilarityParams<double> params;  // source pixel frame
  BinaryMask mask;                  // source pixel frame
};

/// Clamps size to [1, 4 extent] and wraps theta so alignment stays
/// invertible; non-finite fields fall back to a centered upright chest.
SimilarityParams<double> clamp_prediction(SimilarityParams<double> p, int extent);

/// Runs the network on one source image. Non-square or off-size sources are
/// resampled to the network input and the outputs mapped back.
Prediction predict(const YNet<float>& model, const std::string& id, const GrayImage& image);

struct BatchFailure {
  std::string id;
  std::string error;
};

struct BatchSummary {
  std::size_t inputs = 0;
  std::vector<std::string> written;  // ids in input order
  std::vector<BatchFailure> failures;
  double seconds = 0;
};

struct PreprocessOptions {
  int canvas = 64;
  int workers = 1;
  std::string checkpoint_hash;
  std::string config_hash;
};

/// Per image writes aligned/<id>.png, aligned_masks/<id>.png,
/// masks/<id>.png (source frame) and sidecars/<id>.json, then
/// predictions.csv and failures.csv. Failures never stop the batch.
BatchSummary preprocess_batch(const YNet<float>& model, const std::vector<ManifestEntry>& entries,
                              const std::filesystem::path& root, const std::filesystem::path& out_dir,
                              const PreprocessOptions& opt);

/// controls/<id>.png: the central square scaled to the canvas.
BatchSummary make_controls(const std::vector<ManifestEntry>& entries, const std::filesystem::path& root,
                           const std::filesystem::path& out_dir, int canvas, int workers = 1);

/// id,cx,cy,theta,size
void write_predictions_csv(const std::vector<Prediction>& preds, const std::filesystem::path& path);
/// Masks are read from `mask_dir`/<id>.png when the directory is given.
std::vector<Prediction> read_predictions_csv(const std::filesystem::path& path,
                                             const std::filesystem::path& mask_dir = {});

struct GradingInputs {
  const LabelRecord* truth = nullptr;
  int src_w = 0;
  int src_h = 0;
};

ImageVerdict grade_experimental(const GradingInputs& in, const Prediction& pred, int canvas,
                                const GeometryRules& geo = {}, const MaskRules& mask = {});

/// The control image is the center crop with nothing masked.
ImageVerdict grade_control(const GradingInputs& in, int canvas, const GeometryRules& geo = {},
                           const MaskRules& mask = {});

/// Bounded pool: calls fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace geomask
