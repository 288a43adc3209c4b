#include "geomask/weight_manifest.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "geomask/error.hpp"
#include "geomask/random.hpp"

namespace geomask {
namespace {

static_assert(std::endian::native == std::endian::little, "weight manifests assume a little-endian host");

constexpr char kMagic[8] = {'G', 'M', 'W', 'M', 'F', 'S', 'T', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kFloat32 = 1;

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size, std::string context) : data_(data), size_(size), ctx_(std::move(context)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto len = get<std::uint32_t>();
    need(len);
    std::string s(data_ + pos_, len);
    pos_ += len;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > size_) throw Error(ErrorKind::CorruptFile, ctx_ + ": truncated manifest header");
  }

  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string ctx_;
};

std::uint32_t crc(const void* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

const ManifestTensor* WeightManifest::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void write_manifest(const WeightManifest& manifest, const std::filesystem::path& path) {
  Writer header;
  header.put<std::uint32_t>(static_cast<std::uint32_t>(manifest.meta.size()));
  for (const auto& [k, v] : manifest.meta) {
    header.put_string(k);
    header.put_string(v);
  }
  header.put<std::uint32_t>(static_cast<std::uint32_t>(manifest.tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& t : manifest.tensors) {
    std::int64_t expected = 1;
    for (auto d : t.shape) expected *= d;
    if (expected != static_cast<std::int64_t>(t.data.size()))
      throw Error(ErrorKind::ManifestMismatch, t.name + ": shape does not match payload size");
    const std::uint64_t nbytes = t.data.size() * sizeof(float);
    header.put_string(t.name);
    header.put<std::uint8_t>(kFloat32);
    header.put<std::uint8_t>(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) header.put<std::int64_t>(d);
    header.put<std::uint64_t>(offset);
    header.put<std::uint64_t>(nbytes);
    header.put<std::uint32_t>(crc(t.data.data(), nbytes));
    offset += nbytes;
  }

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + tmp.string());
    const std::string& h = header.bytes();
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t fields[3] = {kVersion, static_cast<std::uint32_t>(h.size()), crc(h.data(), h.size())};
    out.write(reinterpret_cast<const char*>(fields), sizeof(fields));
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& t : manifest.tensors)
      out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot rename into " + path.string() + ": " + ec.message());
}

WeightManifest read_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::IoFailure, "no such manifest: " + path.string());
  const std::string bytes = read_all(path);
  const std::string ctx = path.string();
  constexpr std::size_t kPrefix = sizeof(kMagic) + 3 * sizeof(std::uint32_t);
  if (bytes.size() < kPrefix || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorKind::CorruptFile, ctx + ": not a weight manifest");
  std::uint32_t fields[3];
  std::memcpy(fields, bytes.data() + sizeof(kMagic), sizeof(fields));
  if (fields[0] != kVersion) throw Error(ErrorKind::CorruptFile, ctx + ": unsupported manifest version");
  const std::size_t header_len = fields[1];
  if (kPrefix + header_len > bytes.size()) throw Error(ErrorKind::CorruptFile, ctx + ": truncated header");
  const char* header = bytes.data() + kPrefix;
  if (crc(header, header_len) != fields[2]) throw Error(ErrorKind::CorruptFile, ctx + ": header checksum mismatch");

  Reader r(header, header_len, ctx);
  WeightManifest m;
  const auto meta_count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string k = r.get_string();
    m.meta[k] = r.get_string();
  }
  const auto tensor_count = r.get<std::uint32_t>();
  const char* payload = header + header_len;
  const std::size_t payload_len = bytes.size() - kPrefix - header_len;
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    ManifestTensor t;
    t.name = r.get_string();
    if (r.get<std::uint8_t>() != kFloat32) throw Error(ErrorKind::CorruptFile, ctx + ": unsupported dtype in " + t.name);
    const auto ndim = r.get<std::uint8_t>();
    std::int64_t count = 1;
    for (int d = 0; d < ndim; ++d) {
      t.shape.push_back(r.get<std::int64_t>());
      count *= t.shape.back();
    }
    const auto off = r.get<std::uint64_t>();
    const auto nbytes = r.get<std::uint64_t>();
    const auto payload_crc = r.get<std::uint32_t>();
    if (count < 0 || nbytes != static_cast<std::uint64_t>(count) * sizeof(float) || off + nbytes > payload_len)
      throw Error(ErrorKind::CorruptFile, ctx + ": bad extent for " + t.name);
    if (crc(payload + off, nbytes) != payload_crc)
      throw Error(ErrorKind::CorruptFile, ctx + ": payload checksum mismatch in " + t.name);
    t.data.resize(static_cast<std::size_t>(count));
    std::memcpy(t.data.data(), payload + off, nbytes);
    m.tensors.push_back(std::move(t));
  }
  return m;
}

std::string file_hash(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  return hex64(fnv1a64(bytes));
}

}  // namespace geomask
