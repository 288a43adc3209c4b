#include "geomask/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "geomask/error.hpp"

namespace geomask {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::InvalidConfig, origin + ":" + std::to_string(n) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw Error(ErrorKind::InvalidConfig, origin + ":" + std::to_string(n) + ": empty key");
    c.values_[key] = trim(t.substr(eq + 1));
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string env_name(const std::string& key) {
  std::string out = kEnvPrefix;
  for (char ch : key) out.push_back(ch == '.' || ch == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  return out;
}

void Config::apply_env() {
  std::vector<std::string> keys = documented_keys();
  for (const auto& [k, v] : values_) keys.push_back(k);
  for (const auto& k : keys)
    if (const char* v = std::getenv(env_name(k).c_str())) values_[k] = v;
}

std::optional<std::string> Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used == v->size()) return d;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::InvalidConfig, key + " = '" + *v + "' is not a number");
}

long long Config::get_int(const std::string& key, long long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const long long i = std::stoll(*v, &used);
    if (used == v->size()) return i;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::InvalidConfig, key + " = '" + *v + "' is not an integer");
}

const std::vector<std::string>& documented_keys() {
  static const std::vector<std::string> keys = {
      "aug.seed",          "aug.multiplicity",   "aug.rot_deg",        "aug.scale_lo",      "aug.scale_hi",
      "aug.trans_frac",    "train.lr0",          "train.momentum",     "train.lr_decay",    "train.decay_every",
      "train.epochs",      "train.batch_size",   "train.accumulation", "train.val_fraction", "train.seed",
      "train.w_cls",       "train.w_seg",        "net.input_size",     "net.fc_width",      "net.width_multiplier",
      "net.dropout",       "net.pretrained",     "net.init_seed",      "eval.center_box_frac", "eval.size_lo",
      "eval.size_hi",      "eval.max_angle_deg", "eval.min_recall",    "eval.min_precision", "pipeline.workers",
      "pipeline.canvas", "train.time_budget_s"};
  return keys;
}

AugmentConfig augment_config(const Config& c, AugmentConfig b) {
  b.seed = static_cast<std::uint64_t>(c.get_int("aug.seed", static_cast<long long>(b.seed)));
  b.multiplicity = static_cast<int>(c.get_int("aug.multiplicity", b.multiplicity));
  b.rot_deg = c.get_double("aug.rot_deg", b.rot_deg);
  b.scale_lo = c.get_double("aug.scale_lo", b.scale_lo);
  b.scale_hi = c.get_double("aug.scale_hi", b.scale_hi);
  b.trans_frac = c.get_double("aug.trans_frac", b.trans_frac);
  if (b.multiplicity < 1 || b.rot_deg < 0 || !(b.scale_lo > 0) || b.scale_hi < b.scale_lo || b.trans_frac < 0)
    throw Error(ErrorKind::InvalidConfig, "augmentation ranges are invalid");
  return b;
}

TrainConfig train_config(const Config& c, TrainConfig b) {
  b.lr0 = c.get_double("train.lr0", b.lr0);
  b.momentum = c.get_double("train.momentum", b.momentum);
  b.lr_decay = c.get_double("train.lr_decay", b.lr_decay);
  b.decay_every = static_cast<int>(c.get_int("train.decay_every", b.decay_every));
  b.epochs = static_cast<int>(c.get_int("train.epochs", b.epochs));
  b.batch_size = static_cast<int>(c.get_int("train.batch_size", b.batch_size));
  b.accumulation = static_cast<int>(c.get_int("train.accumulation", b.accumulation));
  b.val_fraction = c.get_double("train.val_fraction", b.val_fraction);
  b.seed = static_cast<std::uint64_t>(c.get_int("train.seed", static_cast<long long>(b.seed)));
  b.w_cls = c.get_double("train.w_cls", b.w_cls);
  b.w_seg = c.get_double("train.w_seg", b.w_seg);
  b.time_budget_s = c.get_double("train.time_budget_s", b.time_budget_s);
  b.validate();
  return b;
}

NetConfig net_config(const Config& c, NetConfig b) {
  b.input_size = static_cast<int>(c.get_int("net.input_size", b.input_size));
  b.fc_width = static_cast<int>(c.get_int("net.fc_width", b.fc_width));
  b.plan.multiplier = c.get_double("net.width_multiplier", b.plan.multiplier);
  b.dropout = c.get_double("net.dropout", b.dropout);
  b.pretrained_encoder_path = c.get_string("net.pretrained", b.pretrained_encoder_path);
  b.validate();
  return b;
}

GeometryRules geometry_rules(const Config& c) {
  GeometryRules r;
  r.center_box_frac = c.get_double("eval.center_box_frac", r.center_box_frac);
  r.size_lo = c.get_double("eval.size_lo", r.size_lo);
  r.size_hi = c.get_double("eval.size_hi", r.size_hi);
  r.max_angle_deg = c.get_double("eval.max_angle_deg", r.max_angle_deg);
  return r;
}

MaskRules mask_rules(const Config& c) {
  MaskRules r;
  r.min_recall = c.get_double("eval.min_recall", r.min_recall);
  r.min_precision = c.get_double("eval.min_precision", r.min_precision);
  return r;
}

}  // namespace geomask
