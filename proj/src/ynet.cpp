#include "geomask/ynet.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include "geomask/error.hpp"
#include "geomask/nn.hpp"

namespace geomask {

std::array<int, kStages> ChannelPlan::encoder_widths() const {
  std::array<int, kStages> out{};
  for (int s = 0; s < kStages; ++s)
    out[s] = std::max(1, static_cast<int>(std::lround(widths[s] * multiplier)));
  return out;
}

std::array<int, kStages> ChannelPlan::decoder_widths() const {
  std::array<int, kStages> out{};
  int w = encoder_widths()[kStages - 1];
  for (int j = 0; j < kStages; ++j) {
    out[j] = std::max(1, w);
    w /= 2;
  }
  return out;
}

NetConfig NetConfig::toy() {
  NetConfig cfg;
  cfg.input_size = 64;
  cfg.fc_width = 256;
  cfg.plan.multiplier = 1.0 / 8.0;
  return cfg;
}

void NetConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidConfig, msg); };
  if (input_size <= 0 || input_size % 64 != 0) fail("input_size must be a positive multiple of 64");
  if (in_channels < 1) fail("in_channels must be >= 1");
  if (n_geo != 4) fail("the geometry head has exactly 4 outputs");
  if (m_seg < 1) fail("m_seg must be >= 1");
  if (fc_width < 1) fail("fc_width must be >= 1");
  if (!(plan.multiplier > 0)) fail("width multiplier must be positive");
  if (!(dropout >= 0 && dropout < 1)) fail("dropout must lie in [0, 1)");
  for (int s = 0; s < kStages; ++s) {
    if (plan.widths[s] < 1) fail("stage widths must be positive");
    if (plan.convs[s] < 1) fail("each stage needs at least one convolution");
  }
}

std::map<std::string, std::string> NetConfig::to_meta() const {
  std::map<std::string, std::string> m;
  m["net.input_size"] = std::to_string(input_size);
  m["net.in_channels"] = std::to_string(in_channels);
  m["net.n_geo"] = std::to_string(n_geo);
  m["net.m_seg"] = std::to_string(m_seg);
  m["net.fc_width"] = std::to_string(fc_width);
  m["net.dropout"] = std::to_string(dropout);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", plan.multiplier);
  m["net.width_multiplier"] = buf;
  std::string widths, convs;
  for (int s = 0; s < kStages; ++s) {
    widths += (s ? "," : "") + std::to_string(plan.widths[s]);
    convs += (s ? "," : "") + std::to_string(plan.convs[s]);
  }
  m["net.widths"] = widths;
  m["net.convs"] = convs;
  return m;
}

NetConfig NetConfig::from_meta(const std::map<std::string, std::string>& meta) {
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = meta.find(k);
    if (it == meta.end()) throw Error(ErrorKind::ManifestMismatch, "missing network metadata key " + k);
    return it->second;
  };
  auto parse_list = [](const std::string& s) {
    std::array<int, kStages> out{};
    std::size_t pos = 0;
    for (int i = 0; i < kStages; ++i) {
      const std::size_t next = s.find(',', pos);
      out[i] = std::stoi(s.substr(pos, next - pos));
      pos = next == std::string::npos ? next : next + 1;
    }
    return out;
  };
  NetConfig cfg;
  try {
    cfg.input_size = std::stoi(get("net.input_size"));
    cfg.in_channels = std::stoi(get("net.in_channels"));
    cfg.n_geo = std::stoi(get("net.n_geo"));
    cfg.m_seg = std::stoi(get("net.m_seg"));
    cfg.fc_width = std::stoi(get("net.fc_width"));
    cfg.dropout = std::stod(get("net.dropout"));
    cfg.plan.multiplier = std::stod(get("net.width_multiplier"));
    cfg.plan.widths = parse_list(get("net.widths"));
    cfg.plan.convs = parse_list(get("net.convs"));
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::ManifestMismatch, "malformed network metadata");
  }
  cfg.validate();
  return cfg;
}

template <typename Scalar>
std::size_t YNet<Scalar>::add_param(std::string name, std::vector<std::int64_t> shape) {
  params_.emplace_back(std::move(name), std::move(shape));
  return params_.size() - 1;
}

template <typename Scalar>
typename YNet<Scalar>::ConvRef YNet<Scalar>::add_conv(const std::string& name, int in, int out, int k) {
  ConvRef r;
  r.weight = add_param(name + ".weight", {out, in, k, k});
  r.bias = add_param(name + ".bias", {out});
  r.k = k;
  return r;
}

template <typename Scalar>
YNet<Scalar>::YNet(const NetConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  const auto enc = cfg_.plan.encoder_widths();
  const auto dec = cfg_.plan.decoder_widths();
  int c = cfg_.in_channels;
  for (int s = 0; s < kStages; ++s) {
    for (int j = 0; j < cfg_.plan.convs[s]; ++j) {
      enc_convs_[s].push_back(
          add_conv("enc.s" + std::to_string(s + 1) + ".conv" + std::to_string(j + 1), c, enc[s], 3));
      c = enc[s];
    }
  }
  const int pooled = kStages > 0 ? enc[kStages - 1] : c;
  const std::int64_t flat = static_cast<std::int64_t>(pooled) * 7 * 7;
  const std::int64_t fc_in[3] = {flat, cfg_.fc_width, cfg_.fc_width};
  const std::int64_t fc_out[3] = {cfg_.fc_width, cfg_.fc_width, cfg_.n_geo};
  for (int i = 0; i < 3; ++i) {
    fc_weight_[i] = add_param("cls.fc" + std::to_string(i + 1) + ".weight", {fc_out[i], fc_in[i]});
    fc_bias_[i] = add_param("cls.fc" + std::to_string(i + 1) + ".bias", {fc_out[i]});
  }
  int up = pooled;
  for (int j = 0; j < kStages; ++j) {
    const int skip = enc[kStages - 1 - j];
    dec_convs_[j] = add_conv("dec.s" + std::to_string(j + 1) + ".conv", up + skip, dec[j], 3);
    up = dec[j];
  }
  seg_conv_ = add_conv("dec.out", up, cfg_.m_seg, 1);
  init(init_seed);
}

template <typename Scalar>
void YNet<Scalar>::init(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x796e6574));
  auto kaiming = [&](const ConvRef& r) {
    auto& w = params_[r.weight];
    const double fan_in = static_cast<double>(w.shape[1] * w.shape[2] * w.shape[3]);
    const double bound = std::sqrt(6.0 / fan_in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.value[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    params_[r.bias].value.setZero();
  };
  for (const auto& stage : enc_convs_)
    for (const auto& r : stage) kaiming(r);
  for (const auto& r : dec_convs_) kaiming(r);
  kaiming(seg_conv_);
  for (int i = 0; i < 3; ++i) {
    auto& w = params_[fc_weight_[i]];
    auto& b = params_[fc_bias_[i]];
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.shape[1]));
    for (Eigen::Index k = 0; k < w.size(); ++k) w.value[k] = static_cast<Scalar>(rng.uniform(-bound, bound));
    for (Eigen::Index k = 0; k < b.size(); ++k) b.value[k] = static_cast<Scalar>(rng.uniform(-bound, bound));
  }
}

template <typename Scalar>
NetOutput<Scalar> YNet<Scalar>::forward(const Tensor<Scalar>& x, Mode mode, Workspace<Scalar>& ws,
                                        Rng* dropout_rng) const {
  if (x.c() != cfg_.in_channels || x.h() != cfg_.input_size || x.w() != cfg_.input_size || x.n() < 1)
    throw Error(ErrorKind::ShapeMismatch, "network input " + to_string(x.shape()) + " does not match config (N," +
                                              std::to_string(cfg_.in_channels) + "," +
                                              std::to_string(cfg_.input_size) + "," +
                                              std::to_string(cfg_.input_size) + ")");
  if (mode == Mode::Train && cfg_.dropout > 0 && !dropout_rng)
    throw Error(ErrorKind::InvalidConfig, "training-mode forward needs a dropout generator");
  ws.mode = mode;
  ws.input = &x;
  ws.trace.clear();
  auto record = [&](std::string name, const Tensor<Scalar>& t) { ws.trace.push_back({std::move(name), t.shape()}); };

  const Tensor<Scalar>* h = &x;
  for (int s = 0; s < kStages; ++s) {
    ws.enc[s].resize(enc_convs_[s].size());
    for (std::size_t j = 0; j < enc_convs_[s].size(); ++j) {
      const ConvRef& r = enc_convs_[s][j];
      nn::conv2d_forward(*h, params_[r.weight], params_[r.bias], 3, 1, ws.enc[s][j]);
      nn::relu_inplace(ws.enc[s][j]);
      h = &ws.enc[s][j];
    }
    record("enc" + std::to_string(s + 1), *h);
    nn::maxpool2_forward(*h, ws.pooled[s], ws.pool_argmax[s]);
    record("pool" + std::to_string(s + 1), ws.pooled[s]);
    h = &ws.pooled[s];
  }
  const Tensor<Scalar>& bottom = ws.pooled[kStages - 1];

  NetOutput<Scalar> out;
  // geometry head
  nn::maxpool2_forward(bottom, ws.cls_pool, ws.cls_pool_argmax);
  record("cls.maxpool", ws.cls_pool);
  nn::adaptive_avgpool_forward(ws.cls_pool, 7, ws.cls_avg);
  record("cls.avgpool", ws.cls_avg);
  const bool drop = mode == Mode::Train && cfg_.dropout > 0;
  nn::linear_forward(ws.cls_avg, params_[fc_weight_[0]], params_[fc_bias_[0]], ws.fc1);
  nn::relu_inplace(ws.fc1);
  ws.fc1_out = ws.fc1;
  if (drop) nn::dropout_forward(ws.fc1_out, cfg_.dropout, *dropout_rng, ws.fc1_mask);
  record("cls.fc1", ws.fc1_out);
  nn::linear_forward(ws.fc1_out, params_[fc_weight_[1]], params_[fc_bias_[1]], ws.fc2);
  nn::relu_inplace(ws.fc2);
  ws.fc2_out = ws.fc2;
  if (drop) nn::dropout_forward(ws.fc2_out, cfg_.dropout, *dropout_rng, ws.fc2_mask);
  record("cls.fc2", ws.fc2_out);
  nn::linear_forward(ws.fc2_out, params_[fc_weight_[2]], params_[fc_bias_[2]], out.geo);
  record("geo", out.geo);

  // segmentation decoder
  const Tensor<Scalar>* u = &bottom;
  for (int j = 0; j < kStages; ++j) {
    const int s = kStages - 1 - j;
    nn::upsample2x_forward(*u, ws.dec_up[j]);
    nn::concat_channels(ws.dec_up[j], ws.enc[s].back(), ws.dec_cat[j]);
    const ConvRef& r = dec_convs_[j];
    nn::conv2d_forward(ws.dec_cat[j], params_[r.weight], params_[r.bias], 3, 1, ws.dec[j]);
    nn::relu_inplace(ws.dec[j]);
    record("dec" + std::to_string(j + 1), ws.dec[j]);
    u = &ws.dec[j];
  }
  nn::conv2d_forward(*u, params_[seg_conv_.weight], params_[seg_conv_.bias], 1, 0, out.seg_logits);
  record("seg", out.seg_logits);
  return out;
}

template <typename Scalar>
NetOutput<Scalar> YNet<Scalar>::forward(const Tensor<Scalar>& x) const {
  Workspace<Scalar> ws;
  return forward(x, Mode::Eval, ws);
}

template <typename Scalar>
void YNet<Scalar>::backward(const Workspace<Scalar>& ws, const Tensor<Scalar>& dgeo, const Tensor<Scalar>& dseg) {
  if (!ws.input) throw Error(ErrorKind::ShapeMismatch, "backward without a cached forward pass");
  const bool drop = ws.mode == Mode::Train && cfg_.dropout > 0;

  // geometry head
  Tensor<Scalar> g2, g1, gavg, gpool, dbottom;
  nn::linear_backward(ws.fc2_out, dgeo, params_[fc_weight_[2]], params_[fc_bias_[2]], &g2);
  if (drop) g2.flat().array() *= ws.fc2_mask.flat().array();
  nn::relu_backward(ws.fc2, g2);
  nn::linear_backward(ws.fc1_out, g2, params_[fc_weight_[1]], params_[fc_bias_[1]], &g1);
  if (drop) g1.flat().array() *= ws.fc1_mask.flat().array();
  nn::relu_backward(ws.fc1, g1);
  nn::linear_backward(ws.cls_avg, g1, params_[fc_weight_[0]], params_[fc_bias_[0]], &gavg);
  nn::adaptive_avgpool_backward(gavg, ws.cls_pool.shape(), gpool);
  nn::maxpool2_backward(gpool, ws.cls_pool_argmax, ws.pooled[kStages - 1].shape(), dbottom);

  // decoder, collecting gradients for the encoder skip activations
  std::array<Tensor<Scalar>, kStages> dskip;
  Tensor<Scalar> du, dcat, dup;
  nn::conv2d_backward(ws.dec[kStages - 1], dseg, params_[seg_conv_.weight], params_[seg_conv_.bias], 1, 0, &du);
  for (int j = kStages - 1; j >= 0; --j) {
    const int s = kStages - 1 - j;
    nn::relu_backward(ws.dec[j], du);
    const ConvRef& r = dec_convs_[j];
    nn::conv2d_backward(ws.dec_cat[j], du, params_[r.weight], params_[r.bias], 3, 1, &dcat);
    nn::split_channels(dcat, ws.dec_up[j].c(), dup, dskip[s]);
    nn::upsample2x_backward(dup, du);
  }
  dbottom.flat() += du.flat();

  // encoder
  Tensor<Scalar> dpool = std::move(dbottom);
  Tensor<Scalar> dact, dprev;
  for (int s = kStages - 1; s >= 0; --s) {
    nn::maxpool2_backward(dpool, ws.pool_argmax[s], ws.enc[s].back().shape(), dact);
    dact.flat() += dskip[s].flat();
    for (int j = static_cast<int>(enc_convs_[s].size()) - 1; j >= 0; --j) {
      const Tensor<Scalar>& out = ws.enc[s][j];
      const Tensor<Scalar>& in = j > 0 ? ws.enc[s][j - 1] : (s > 0 ? ws.pooled[s - 1] : *ws.input);
      nn::relu_backward(out, dact);
      const ConvRef& r = enc_convs_[s][j];
      const bool need_dx = s > 0 || j > 0;
      nn::conv2d_backward(in, dact, params_[r.weight], params_[r.bias], 3, 1, need_dx ? &dprev : nullptr);
      if (need_dx) std::swap(dact, dprev);
    }
    if (s > 0) dpool = std::move(dact);
  }
}

template <typename Scalar>
void YNet<Scalar>::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

template <typename Scalar>
Parameter<Scalar>* YNet<Scalar>::find(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

template <typename Scalar>
std::size_t YNet<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
  return n;
}

template <typename Scalar>
std::size_t YNet<Scalar>::encoder_parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.name.rfind("enc.", 0) == 0) n += static_cast<std::size_t>(p.size());
  return n;
}

template <typename Scalar>
WeightManifest YNet<Scalar>::export_weights(std::string_view prefix) const {
  WeightManifest m;
  m.meta = cfg_.to_meta();
  for (const auto& p : params_) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    ManifestTensor t;
    t.name = p.name;
    t.shape = p.shape;
    t.data.resize(static_cast<std::size_t>(p.size()));
    for (Eigen::Index i = 0; i < p.size(); ++i) t.data[static_cast<std::size_t>(i)] = static_cast<float>(p.value[i]);
    m.tensors.push_back(std::move(t));
  }
  return m;
}

template <typename Scalar>
void YNet<Scalar>::import_weights(const WeightManifest& manifest, std::string_view prefix) {
  // validate everything before touching the model
  for (const auto& p : params_) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    const ManifestTensor* t = manifest.find(p.name);
    if (!t) throw Error(ErrorKind::ManifestMismatch, "manifest lacks " + p.name);
    if (t->shape != p.shape) throw Error(ErrorKind::ManifestMismatch, "shape mismatch for " + p.name);
  }
  for (auto& p : params_) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    const ManifestTensor* t = manifest.find(p.name);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.value[i] = static_cast<Scalar>(t->data[static_cast<std::size_t>(i)]);
  }
}

namespace {

/// Rewrites torchvision `features.N.{weight,bias}` tensors onto native encoder
/// names, pairing the k-th convolution with the k-th encoder conv.
WeightManifest translate_torchvision(const WeightManifest& in, const std::vector<std::string>& conv_names) {
  const std::regex pattern(R"(features\.(\d+)\.weight)");
  std::vector<std::pair<int, const ManifestTensor*>> convs;
  for (const auto& t : in.tensors) {
    std::smatch m;
    if (std::regex_match(t.name, m, pattern) && t.shape.size() == 4) convs.emplace_back(std::stoi(m[1]), &t);
  }
  std::sort(convs.begin(), convs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  if (convs.size() != conv_names.size())
    throw Error(ErrorKind::ManifestMismatch, "manifest has " + std::to_string(convs.size()) +
                                                 " encoder convolutions, model expects " +
                                                 std::to_string(conv_names.size()));
  WeightManifest out;
  out.meta = in.meta;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    ManifestTensor w = *convs[i].second;
    w.name = conv_names[i] + ".weight";
    const ManifestTensor* b = in.find("features." + std::to_string(convs[i].first) + ".bias");
    if (!b) throw Error(ErrorKind::ManifestMismatch, "missing bias for features." + std::to_string(convs[i].first));
    ManifestTensor bb = *b;
    bb.name = conv_names[i] + ".bias";
    out.tensors.push_back(std::move(w));
    out.tensors.push_back(std::move(bb));
  }
  return out;
}

}  // namespace

template <typename Scalar>
void load_pretrained_encoder(YNet<Scalar>& model, const std::filesystem::path& path) {
  WeightManifest m = read_manifest(path);
  std::vector<std::string> conv_names;
  for (const auto& p : model.parameters())
    if (p.name.rfind("enc.", 0) == 0 && p.shape.size() == 4) conv_names.push_back(p.name.substr(0, p.name.size() - 7));
  if (!m.find(conv_names.front() + ".weight")) m = translate_torchvision(m, conv_names);

  // RGB first layer onto a grayscale model: sum the input-channel slices.
  ManifestTensor* first = nullptr;
  for (auto& t : m.tensors)
    if (t.name == conv_names.front() + ".weight") first = &t;
  const int in_ch = model.config().in_channels;
  if (first && first->shape.size() == 4 && first->shape[1] == 3 && in_ch == 1) {
    const std::int64_t out = first->shape[0], kk = first->shape[2] * first->shape[3];
    std::vector<float> gray(static_cast<std::size_t>(out * kk), 0.0f);
    for (std::int64_t o = 0; o < out; ++o)
      for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t k = 0; k < kk; ++k)
          gray[static_cast<std::size_t>(o * kk + k)] += first->data[static_cast<std::size_t>((o * 3 + c) * kk + k)];
    first->data = std::move(gray);
    first->shape[1] = 1;
  }
  model.import_weights(m, "enc.");
}

template class YNet<float>;
template class YNet<double>;
template void load_pretrained_encoder<float>(YNet<float>&, const std::filesystem::path&);
template void load_pretrained_encoder<double>(YNet<double>&, const std::filesystem::path&);

}  // namespace geomask
