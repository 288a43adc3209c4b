#pragma once

// Dataset manifests and landmark/annotation label records.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "geomask/geometry.hpp"
#include "geomask/raster.hpp"

namespace geomask {

struct ManifestEntry {
  std::string image_id;
  std::string source;  // collection tag
  std::string path;    // relative to the manifest's directory
  std::string view;    // "frontal" or "other"
  std::string split;   // reserved, available, train, val or eval

  bool operator==(const ManifestEntry&) const = default;
};

/// Header: image_id,source,path,view,split
std::vector<ManifestEntry> read_image_manifest(const std::filesystem::path& path);
void write_image_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

/// Marks every entry listed in `reserved_ids` as reserved and every other
/// one as available.
void apply_reserved(std::vector<ManifestEntry>& entries, const std::set<std::string>& reserved_ids);
/// One id per line.
std::set<std::string> read_id_list(const std::filesystem::path& path);

/// SchemaViolation when an id is reserved in one manifest and not in
/// another, DuplicateId when an id repeats within a manifest.
void check_partition(const std::vector<std::vector<ManifestEntry>>& manifests);

struct LabelRecord {
  std::string image_id;
  std::optional<LandmarkSet<double>> landmarks;
  BoxList boxes;
  bool excluded = false;
  std::string reason;
};

struct LabelImport {
  std::vector<LabelRecord> usable;
  std::vector<LabelRecord> excluded;
};

/// Parses one JSONL stream. `origin` prefixes error messages.
LabelImport parse_labels(std::istream& in, const std::string& origin);
LabelImport import_labels(const std::filesystem::path& path);

std::string label_to_json(const LabelRecord& r);
void write_labels(const std::vector<LabelRecord>& records, const std::filesystem::path& path);

}  // namespace geomask
