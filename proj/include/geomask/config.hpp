#pragma once

// Flat `key = value` configuration with environment overrides.
//
// A key such as `train.batch_size` is overridden by GEOMASK_TRAIN_BATCH_SIZE.
// Lines starting with '#' are comments.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geomask/augment.hpp"
#include "geomask/evaluate.hpp"
#include "geomask/train.hpp"
#include "geomask/ynet.hpp"

namespace geomask {

inline constexpr const char* kEnvPrefix = "GEOMASK_";

class Config {
 public:
  Config() = default;

  /// InvalidConfig on malformed lines, IoFailure if unreadable.
  static Config load(const std::filesystem::path& path);
  static Config parse(const std::string& text, const std::string& origin = "<string>");

  /// Applies GEOMASK_* variables for every documented key and every key
  /// already present.
  void apply_env();

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::string env_name(const std::string& key);

/// Every key read by the tools, for documentation and env lookup.
const std::vector<std::string>& documented_keys();

AugmentConfig augment_config(const Config& c, AugmentConfig base = {});
TrainConfig train_config(const Config& c, TrainConfig base = {});
NetConfig net_config(const Config& c, NetConfig base = NetConfig::toy());
GeometryRules geometry_rules(const Config& c);
MaskRules mask_rules(const Config& c);

}  // namespace geomask
