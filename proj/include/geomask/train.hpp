#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "geomask/augment.hpp"
#include "geomask/geometry.hpp"
#include "geomask/ynet.hpp"

namespace geomask {

struct TrainConfig {
  double lr0 = 1e-3;
  double momentum = 0.9;
  double lr_decay = 0.2;
  int decay_every = 20;
  int epochs = 10;
  int batch_size = 8;
  int accumulation = 1;  // micro-batches per logical batch
  double val_fraction = 0.05;
  std::uint64_t seed = 0;
  double w_cls = 0.5;
  double w_seg = 0.5;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  double time_budget_s = 0;  // stop before an epoch that would overrun; 0 = none

  void validate() const;
  std::map<std::string, std::string> to_meta() const;
};

struct LossValue {
  double cls = 0;
  double seg = 0;
  double total = 0;
};

struct EpochLosses {
  int epoch = 0;
  double lr = 0;
  LossValue train;
  LossValue val;
  double seconds = 0;
};

struct LossReport {
  LossValue initial_val;  // untrained model on the validation split
  std::vector<EpochLosses> curves;

  /// epoch,train_cls,train_seg,train_total,val_cls,val_seg,val_total
  void write_csv(const std::filesystem::path& path) const;
};

/// Mean squared error over all elements; writes dL/dpred when `grad` is set.
template <typename Scalar>
double mse_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target, Tensor<Scalar>* grad = nullptr);

/// Mean of ln(1 + exp(-y x)) with targets y in {-1, +1}.
template <typename Scalar>
double soft_margin_loss(const Tensor<Scalar>& logits, const Tensor<Scalar>& target, Tensor<Scalar>* grad = nullptr);

/// Segmentation loss is normed by ln 2 so a zero-logit model scores 1;
/// geometry targets are already order-one so MSE is used as is.
double total_loss(double cls, double seg, double w_cls = 0.5, double w_seg = 0.5);

double lr_at_epoch(const TrainConfig& cfg, int epoch);

/// Network targets: (cx / W, cy / H, theta / 90, size / W).
std::array<double, 4> encode_geometry(const SimilarityParams<double>& p, int w, int h);
/// Inverse of encode_geometry; no clamping.
SimilarityParams<double> decode_geometry(const std::array<double, 4>& g, int w, int h);

/// Momentum SGD: v <- mu v + g; w <- w - lr v.
template <typename Scalar>
class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum) : momentum_(momentum) {}

  void step(std::vector<Parameter<Scalar>>& params, double lr);

  std::vector<typename Parameter<Scalar>::Vector>& velocity() { return velocity_; }
  const std::vector<typename Parameter<Scalar>::Vector>& velocity() const { return velocity_; }

 private:
  double momentum_;
  std::vector<typename Parameter<Scalar>::Vector> velocity_;
};

/// Deterministic train/validation partition of [0, n).
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
Split split_indices(std::size_t n, double val_fraction, std::uint64_t seed);

/// Batches of samples as network tensors.
template <typename Scalar>
struct Batch {
  Tensor<Scalar> images;   // (N, 1, H, W)
  Tensor<Scalar> geo;      // (N, 4, 1, 1)
  Tensor<Scalar> targets;  // (N, 1, H, W) in {-1, +1}
};

template <typename Scalar>
Batch<Scalar> make_batch(const std::vector<AugmentedSample>& samples);

template <typename Scalar>
Tensor<Scalar> image_tensor(const std::vector<const GrayImage*>& images);

/// Loss of one batch plus, when `accumulate` is set, its gradient scaled by
/// `weight` added into the model's gradient buffers.
template <typename Scalar>
LossValue batch_loss(YNet<Scalar>& model, const Batch<Scalar>& batch, const TrainConfig& cfg, Mode mode,
                     Rng* dropout_rng, bool accumulate, double weight = 1.0);

struct Checkpoint {
  int epoch = 0;
  std::string config_hash;
  WeightManifest manifest;
};

template <typename Scalar>
void save_checkpoint(const YNet<Scalar>& model, const SgdMomentum<Scalar>* optimizer, int epoch,
                     const std::string& config_hash, const std::filesystem::path& path);

/// Rebuilds the network described by the checkpoint metadata.
YNet<float> load_model(const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

using EpochCallback = std::function<void(const EpochLosses&)>;

/// Trains in place and returns the loss curves. On a non-finite loss the
/// model is restored to the last completed epoch and DivergenceDetected is
/// thrown.
template <typename Scalar>
LossReport fit(YNet<Scalar>& model, const AugmentedDataset& data, const TrainConfig& cfg,
               const EpochCallback& on_epoch = {});

std::string config_hash(const std::map<std::string, std::string>& kv);

}  // namespace geomask
