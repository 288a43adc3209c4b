#pragma once

// Self-describing weight container used for pretrained encoders and training
// checkpoints.
//
// Layout (all integers little-endian):
//   magic "GMWMFST1" | u32 version | u32 header_len | u32 header_crc32 | header | payload
// header:
//   u32 meta_count, {u32 key_len, key, u32 value_len, value}...
//   u32 tensor_count, {u32 name_len, name, u8 dtype (1 = float32), u8 ndim,
//                      i64 dims[ndim], u64 offset, u64 nbytes, u32 payload_crc32}...
// Payload offsets are relative to the first payload byte.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace geomask {

struct ManifestTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

struct WeightManifest {
  std::map<std::string, std::string> meta;
  std::vector<ManifestTensor> tensors;

  const ManifestTensor* find(const std::string& name) const;
};

/// Atomic: the file is written under a temporary name and renamed into place.
void write_manifest(const WeightManifest& manifest, const std::filesystem::path& path);

/// IoFailure when absent or unreadable; CorruptFile on bad magic or checksum.
WeightManifest read_manifest(const std::filesystem::path& path);

/// FNV-1a of the file bytes, hex encoded.
std::string file_hash(const std::filesystem::path& path);

}  // namespace geomask
