#pragma once

// Y-Net: a VGG11-style encoder shared by a whole-image regression head (the
// four similarity parameters) and a U-Net decoder producing segmentation
// logits at input resolution.
//
//   encoder   5 stages of [3x3 conv + ReLU] x convs[s], each followed by 2x2 max-pool
//   geometry  2x2 max-pool -> adaptive avg-pool 7x7 -> FC-ReLU-dropout x2 -> FC(n)
//   decoder   5 stages of [2x bilinear up, concat pre-pool encoder activation,
//             3x3 conv + ReLU], then 1x1 conv to m channels

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "geomask/random.hpp"
#include "geomask/tensor.hpp"
#include "geomask/weight_manifest.hpp"

namespace geomask {

constexpr int kStages = 5;

struct ChannelPlan {
  std::array<int, kStages> widths{64, 128, 256, 512, 512};
  std::array<int, kStages> convs{1, 1, 2, 2, 2};
  double multiplier = 1.0;

  std::array<int, kStages> encoder_widths() const;
  /// Starts at the deepest encoder width and halves per stage.
  std::array<int, kStages> decoder_widths() const;
};

struct NetConfig {
  int input_size = 512;
  int in_channels = 1;
  int n_geo = 4;
  int m_seg = 1;
  int fc_width = 4096;
  ChannelPlan plan;
  double dropout = 0.5;
  std::string pretrained_encoder_path;

  static NetConfig full() { return {}; }
  static NetConfig toy();

  /// Throws InvalidConfig.
  void validate() const;

  std::map<std::string, std::string> to_meta() const;
  static NetConfig from_meta(const std::map<std::string, std::string>& meta);
};

enum class Mode { Train, Eval };

template <typename Scalar>
struct NetOutput {
  Tensor<Scalar> geo;         // (N, n, 1, 1) normalized similarity predictions
  Tensor<Scalar> seg_logits;  // (N, m, H, W)
};

struct LayerShape {
  std::string name;
  Shape4 shape;
};

/// Activations cached by forward() for backward(). One per concurrent caller.
template <typename Scalar>
struct Workspace {
  Mode mode = Mode::Eval;
  const Tensor<Scalar>* input = nullptr;
  std::array<std::vector<Tensor<Scalar>>, kStages> enc;
  std::array<Tensor<Scalar>, kStages> pooled;
  std::array<std::vector<std::int64_t>, kStages> pool_argmax;

  Tensor<Scalar> cls_pool;
  std::vector<std::int64_t> cls_pool_argmax;
  Tensor<Scalar> cls_avg;
  Tensor<Scalar> fc1, fc1_out, fc1_mask;
  Tensor<Scalar> fc2, fc2_out, fc2_mask;

  std::array<Tensor<Scalar>, kStages> dec_up;
  std::array<Tensor<Scalar>, kStages> dec_cat;
  std::array<Tensor<Scalar>, kStages> dec;

  std::vector<LayerShape> trace;
};

template <typename Scalar>
class YNet {
 public:
  explicit YNet(const NetConfig& cfg, std::uint64_t init_seed = 0);

  const NetConfig& config() const { return cfg_; }

  NetOutput<Scalar> forward(const Tensor<Scalar>& x, Mode mode, Workspace<Scalar>& ws, Rng* dropout_rng = nullptr) const;
  /// Evaluation-mode forward with a private workspace.
  NetOutput<Scalar> forward(const Tensor<Scalar>& x) const;

  /// Accumulates parameter gradients of sum(dgeo * geo) + sum(dseg * seg).
  void backward(const Workspace<Scalar>& ws, const Tensor<Scalar>& dgeo, const Tensor<Scalar>& dseg);
  void zero_grad();

  std::vector<Parameter<Scalar>>& parameters() { return params_; }
  const std::vector<Parameter<Scalar>>& parameters() const { return params_; }
  Parameter<Scalar>* find(std::string_view name);

  std::size_t parameter_count() const;
  std::size_t encoder_parameter_count() const;

  /// Tensors whose names start with `prefix` ("" selects everything).
  WeightManifest export_weights(std::string_view prefix = "") const;
  /// Replaces every model tensor under `prefix`; ManifestMismatch when one
  /// is missing or has a different shape.
  void import_weights(const WeightManifest& manifest, std::string_view prefix = "");

  template <typename Other>
  YNet<Other> cast() const {
    YNet<Other> out(cfg_);
    for (std::size_t i = 0; i < params_.size(); ++i)
      out.parameters()[i].value = params_[i].value.template cast<Other>();
    return out;
  }

 private:
  struct ConvRef {
    std::size_t weight, bias;
    int k;
  };

  std::size_t add_param(std::string name, std::vector<std::int64_t> shape);
  ConvRef add_conv(const std::string& name, int in, int out, int k);
  void init(std::uint64_t seed);

  NetConfig cfg_;
  std::vector<Parameter<Scalar>> params_;
  std::array<std::vector<ConvRef>, kStages> enc_convs_;
  std::array<ConvRef, kStages> dec_convs_{};
  ConvRef seg_conv_{};
  std::array<std::size_t, 3> fc_weight_{};
  std::array<std::size_t, 3> fc_bias_{};
};

/// Replaces encoder convolutions from a manifest. Accepts the native
/// `enc.sS.convJ.*` names or torchvision-style `features.N.*` names (mapped in
/// index order); a 3-channel first layer is summed to one channel for
/// grayscale models.
template <typename Scalar>
void load_pretrained_encoder(YNet<Scalar>& model, const std::filesystem::path& path);

}  // namespace geomask
