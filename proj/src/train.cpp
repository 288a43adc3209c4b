#include "geomask/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "geomask/error.hpp"
#include "geomask/random.hpp"

namespace geomask {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
  if (!(lr0 >= 0)) fail("train.lr0 must be non-negative");
  if (!(momentum >= 0 && momentum < 1)) fail("train.momentum must lie in [0, 1)");
  if (!(lr_decay > 0)) fail("train.lr_decay must be positive");
  if (decay_every < 1) fail("train.decay_every must be >= 1");
  if (epochs < 0) fail("train.epochs must be >= 0");
  if (batch_size < 1) fail("train.batch_size must be >= 1");
  if (accumulation < 1 || accumulation > batch_size) fail("train.accumulation must lie in [1, batch_size]");
  if (!(val_fraction > 0 && val_fraction < 1)) fail("train.val_fraction must lie in (0, 1)");
  if (w_cls < 0 || w_seg < 0 || std::abs(w_cls + w_seg - 1.0) > 1e-12) fail("loss weights must sum to 1");
}

std::map<std::string, std::string> TrainConfig::to_meta() const {
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  return {{"train.lr0", num(lr0)},
          {"train.momentum", num(momentum)},
          {"train.lr_decay", num(lr_decay)},
          {"train.decay_every", std::to_string(decay_every)},
          {"train.epochs", std::to_string(epochs)},
          {"train.batch_size", std::to_string(batch_size)},
          {"train.accumulation", std::to_string(accumulation)},
          {"train.val_fraction", num(val_fraction)},
          {"train.seed", std::to_string(seed)},
          {"train.w_cls", num(w_cls)},
          {"train.w_seg", num(w_seg)}};
}

void LossReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out << "epoch,train_cls,train_seg,train_total,val_cls,val_seg,val_total\n";
  char line[256];
  for (const auto& e : curves) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.train.cls, e.train.seg,
                  e.train.total, e.val.cls, e.val.seg, e.val.total);
    out << line;
  }
}

template <typename Scalar>
double mse_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target, Tensor<Scalar>* grad) {
  if (pred.shape() != target.shape())
    throw Error(ErrorKind::ShapeMismatch, "mse " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  const auto n = static_cast<double>(pred.size());
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.data()[i]) - static_cast<double>(target.data()[i]);
    acc += d * d;
  }
  if (grad) {
    grad->reshape_discard(pred.shape());
    for (std::size_t i = 0; i < pred.size(); ++i)
      grad->data()[i] = static_cast<Scalar>(2.0 * (static_cast<double>(pred.data()[i]) - target.data()[i]) / n);
  }
  return acc / n;
}

template <typename Scalar>
double soft_margin_loss(const Tensor<Scalar>& logits, const Tensor<Scalar>& target, Tensor<Scalar>* grad) {
  if (logits.shape() != target.shape())
    throw Error(ErrorKind::ShapeMismatch,
                "soft margin " + to_string(logits.shape()) + " vs " + to_string(target.shape()));
  for (std::size_t i = 0; i < target.size(); ++i)
    if (target.data()[i] != Scalar(1) && target.data()[i] != Scalar(-1))
      throw Error(ErrorKind::InvalidTarget, "soft margin targets must be -1 or +1");
  const auto n = static_cast<double>(logits.size());
  if (grad) grad->reshape_discard(logits.shape());
  double acc = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double y = target.data()[i];
    const double z = -y * static_cast<double>(logits.data()[i]);
    // softplus(z) without overflow
    acc += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    if (grad) {
      const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      grad->data()[i] = static_cast<Scalar>(-y * sig / n);
    }
  }
  return acc / n;
}

double total_loss(double cls, double seg, double w_cls, double w_seg) {
  return w_cls * cls + w_seg * seg / std::numbers::ln2;
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0) throw Error(ErrorKind::InvalidParams, "epoch must be >= 0");
  return cfg.lr0 * std::pow(cfg.lr_decay, epoch / cfg.decay_every);
}

std::array<double, 4> encode_geometry(const SimilarityParams<double>& p, int w, int h) {
  return {p.cx / w, p.cy / h, p.theta / 90.0, p.size / w};
}

SimilarityParams<double> decode_geometry(const std::array<double, 4>& g, int w, int h) {
  return {g[0] * w, g[1] * h, g[2] * 90.0, g[3] * w};
}

template <typename Scalar>
void SgdMomentum<Scalar>::step(std::vector<Parameter<Scalar>>& params, double lr) {
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (const auto& p : params) velocity_.push_back(Parameter<Scalar>::Vector::Zero(p.size()));
  }
  const auto mu = static_cast<Scalar>(momentum_);
  const auto eta = static_cast<Scalar>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity_[i] = mu * velocity_[i] + params[i].grad;
    params[i].value -= eta * velocity_[i];
  }
}

Split split_indices(std::size_t n, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x73706c6974));
  rng.shuffle(order.begin(), order.end());
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  if (n >= 2) n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  Split s;
  s.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.val.begin(), s.val.end());
  return s;
}

template <typename Scalar>
Tensor<Scalar> image_tensor(const std::vector<const GrayImage*>& images) {
  if (images.empty()) throw Error(ErrorKind::ShapeMismatch, "empty image batch");
  const int w = images.front()->width(), h = images.front()->height();
  Tensor<Scalar> t(static_cast<int>(images.size()), 1, h, w);
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (images[n]->width() != w || images[n]->height() != h)
      throw Error(ErrorKind::ShapeMismatch, "images in a batch must share dimensions");
    t.sample(static_cast<int>(n)).row(0) =
        Eigen::Map<const Eigen::Matrix<float, 1, Eigen::Dynamic>>(images[n]->data(), w * h).template cast<Scalar>();
  }
  return t;
}

template <typename Scalar>
Batch<Scalar> make_batch(const std::vector<AugmentedSample>& samples) {
  std::vector<const GrayImage*> imgs;
  for (const auto& s : samples) imgs.push_back(&s.image);
  Batch<Scalar> b;
  b.images = image_tensor<Scalar>(imgs);
  const int n = b.images.n(), h = b.images.h(), w = b.images.w();
  b.geo = Tensor<Scalar>(n, 4, 1, 1);
  b.targets = Tensor<Scalar>(n, 1, h, w);
  for (int i = 0; i < n; ++i) {
    const auto g = encode_geometry(samples[i].params, w, h);
    for (int k = 0; k < 4; ++k) b.geo(i, k, 0, 0) = static_cast<Scalar>(g[k]);
    const auto& mask = samples[i].mask;
    if (mask.width() != w || mask.height() != h) throw Error(ErrorKind::ShapeMismatch, "mask/image size mismatch");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) b.targets(i, 0, y, x) = mask.get(x, y) ? Scalar(1) : Scalar(-1);
  }
  return b;
}

template <typename Scalar>
LossValue batch_loss(YNet<Scalar>& model, const Batch<Scalar>& batch, const TrainConfig& cfg, Mode mode,
                     Rng* dropout_rng, bool accumulate, double weight) {
  Workspace<Scalar> ws;
  const NetOutput<Scalar> out = model.forward(batch.images, mode, ws, dropout_rng);
  Tensor<Scalar> dgeo, dseg;
  LossValue v;
  v.cls = mse_loss(out.geo, batch.geo, accumulate ? &dgeo : nullptr);
  v.seg = soft_margin_loss(out.seg_logits, batch.targets, accumulate ? &dseg : nullptr);
  v.total = total_loss(v.cls, v.seg, cfg.w_cls, cfg.w_seg);
  if (accumulate && std::isfinite(v.total)) {
    dgeo.flat() *= static_cast<Scalar>(weight * cfg.w_cls);
    dseg.flat() *= static_cast<Scalar>(weight * cfg.w_seg / std::numbers::ln2);
    model.backward(ws, dgeo, dseg);
  }
  return v;
}

std::string config_hash(const std::map<std::string, std::string>& kv) {
  std::string joined;
  for (const auto& [k, v] : kv) joined += k + "=" + v + "\n";
  return hex64(fnv1a64(joined));
}

template <typename Scalar>
void save_checkpoint(const YNet<Scalar>& model, const SgdMomentum<Scalar>* optimizer, int epoch,
                     const std::string& cfg_hash, const std::filesystem::path& path) {
  WeightManifest m = model.export_weights();
  m.meta["kind"] = "checkpoint";
  m.meta["epoch"] = std::to_string(epoch);
  m.meta["config_hash"] = cfg_hash;
  if (optimizer && !optimizer->velocity().empty()) {
    const auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      ManifestTensor t;
      t.name = "opt.velocity." + params[i].name;
      t.shape = params[i].shape;
      const auto& v = optimizer->velocity()[i];
      t.data.resize(static_cast<std::size_t>(v.size()));
      for (Eigen::Index k = 0; k < v.size(); ++k) t.data[static_cast<std::size_t>(k)] = static_cast<float>(v[k]);
      m.tensors.push_back(std::move(t));
    }
  }
  write_manifest(m, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  Checkpoint c;
  c.manifest = read_manifest(path);
  auto it = c.manifest.meta.find("epoch");
  c.epoch = it == c.manifest.meta.end() ? 0 : std::stoi(it->second);
  it = c.manifest.meta.find("config_hash");
  if (it != c.manifest.meta.end()) c.config_hash = it->second;
  return c;
}

YNet<float> load_model(const std::filesystem::path& path) {
  const WeightManifest m = read_manifest(path);
  YNet<float> model(NetConfig::from_meta(m.meta));
  model.import_weights(m);
  return model;
}

namespace {

template <typename Scalar>
std::vector<typename Parameter<Scalar>::Vector> snapshot(const YNet<Scalar>& model) {
  std::vector<typename Parameter<Scalar>::Vector> out;
  for (const auto& p : model.parameters()) out.push_back(p.value);
  return out;
}

template <typename Scalar>
void restore(YNet<Scalar>& model, const std::vector<typename Parameter<Scalar>::Vector>& snap) {
  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = snap[i];
}

template <typename Scalar>
LossValue evaluate_split(YNet<Scalar>& model, const AugmentedDataset& data, const std::vector<std::size_t>& idx,
                         const TrainConfig& cfg) {
  LossValue sum;
  std::size_t seen = 0;
  for (std::size_t b0 = 0; b0 < idx.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t b1 = std::min(idx.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
    std::vector<AugmentedSample> samples;
    for (std::size_t i = b0; i < b1; ++i) samples.push_back(data.get(idx[i], 0));
    const LossValue v = batch_loss(model, make_batch<Scalar>(samples), cfg, Mode::Eval, nullptr, false);
    const auto n = static_cast<double>(b1 - b0);
    sum.cls += v.cls * n;
    sum.seg += v.seg * n;
    seen += b1 - b0;
  }
  if (seen) {
    sum.cls /= static_cast<double>(seen);
    sum.seg /= static_cast<double>(seen);
  }
  sum.total = total_loss(sum.cls, sum.seg, cfg.w_cls, cfg.w_seg);
  return sum;
}

}  // namespace

template <typename Scalar>
LossReport fit(YNet<Scalar>& model, const AugmentedDataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.size() < 2) throw Error(ErrorKind::InvalidConfig, "training needs at least two samples");
  std::map<std::string, std::string> kv = cfg.to_meta();
  for (const auto& [k, v] : model.config().to_meta()) kv[k] = v;
  const std::string hash = config_hash(kv);
  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

  const Split split = split_indices(data.size(), cfg.val_fraction, cfg.seed);
  SgdMomentum<Scalar> opt(cfg.momentum);
  LossReport report;
  report.initial_val = evaluate_split(model, data, split.val, cfg);
  auto good = snapshot(model);

  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.time_budget_s > 0 && !report.curves.empty()) {
      const double used = std::chrono::duration<double>(t0 - start).count();
      if (used + report.curves.back().seconds > cfg.time_budget_s) break;
    }
    const double lr = lr_at_epoch(cfg, epoch);
    std::vector<std::size_t> order = split.train;
    Rng order_rng(mix_seed(cfg.seed, 0x6f72646572, static_cast<std::uint64_t>(epoch)));
    order_rng.shuffle(order.begin(), order.end());

    LossValue sum;
    std::size_t seen = 0;
    for (std::size_t b0 = 0, bi = 0; b0 < order.size(); b0 += batch, ++bi) {
      const std::size_t b1 = std::min(order.size(), b0 + batch);
      const std::size_t n = b1 - b0;
      const std::size_t micro = (n + static_cast<std::size_t>(cfg.accumulation) - 1) / static_cast<std::size_t>(cfg.accumulation);
      model.zero_grad();
      for (std::size_t m0 = b0, mi = 0; m0 < b1; m0 += micro, ++mi) {
        const std::size_t m1 = std::min(b1, m0 + micro);
        std::vector<AugmentedSample> samples;
        for (std::size_t i = m0; i < m1; ++i) samples.push_back(data.get(order[i], static_cast<std::uint64_t>(epoch)));
        Rng drop_rng(mix_seed(cfg.seed, 0x64726f70, static_cast<std::uint64_t>(epoch), bi, mi));
        const double weight = static_cast<double>(m1 - m0) / static_cast<double>(n);
        const LossValue v =
            batch_loss(model, make_batch<Scalar>(samples), cfg, Mode::Train, &drop_rng, true, weight);
        if (!std::isfinite(v.total)) {
          restore(model, good);
          throw Error(ErrorKind::DivergenceDetected,
                      "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi));
        }
        sum.cls += v.cls * static_cast<double>(m1 - m0);
        sum.seg += v.seg * static_cast<double>(m1 - m0);
        seen += m1 - m0;
      }
      opt.step(model.parameters(), lr);
    }
    EpochLosses e;
    e.epoch = epoch;
    e.lr = lr;
    if (seen) {
      e.train.cls = sum.cls / static_cast<double>(seen);
      e.train.seg = sum.seg / static_cast<double>(seen);
    }
    e.train.total = total_loss(e.train.cls, e.train.seg, cfg.w_cls, cfg.w_seg);
    e.val = evaluate_split(model, data, split.val, cfg);
    if (!std::isfinite(e.val.total)) {
      restore(model, good);
      throw Error(ErrorKind::DivergenceDetected, "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.curves.push_back(e);
    good = snapshot(model);
    if (!cfg.checkpoint_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03d.gmw", epoch);
      save_checkpoint(model, &opt, epoch, hash, cfg.checkpoint_dir / name);
      report.write_csv(cfg.checkpoint_dir / "loss_curves.csv");
    }
    if (on_epoch) on_epoch(e);
  }
  return report;
}

#define GEOMASK_INSTANTIATE_TRAIN(S)                                                                            \
  template double mse_loss<S>(const Tensor<S>&, const Tensor<S>&, Tensor<S>*);                                 \
  template double soft_margin_loss<S>(const Tensor<S>&, const Tensor<S>&, Tensor<S>*);                         \
  template class SgdMomentum<S>;                                                                                \
  template Tensor<S> image_tensor<S>(const std::vector<const GrayImage*>&);                                     \
  template Batch<S> make_batch<S>(const std::vector<AugmentedSample>&);                                         \
  template LossValue batch_loss<S>(YNet<S>&, const Batch<S>&, const TrainConfig&, Mode, Rng*, bool, double);    \
  template void save_checkpoint<S>(const YNet<S>&, const SgdMomentum<S>*, int, const std::string&,              \
                                   const std::filesystem::path&);                                               \
  template LossReport fit<S>(YNet<S>&, const AugmentedDataset&, const TrainConfig&, const EpochCallback&);

GEOMASK_INSTANTIATE_TRAIN(float)
GEOMASK_INSTANTIATE_TRAIN(double)

}  // namespace geomask
