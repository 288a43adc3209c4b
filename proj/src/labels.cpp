#include "geomask/labels.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "geomask/error.hpp"

namespace geomask {

using nlohmann::json;

namespace {

const char* kManifestHeader = "image_id,source,path,view,split";

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

bool valid_split(const std::string& s) {
  return s == "reserved" || s == "available" || s == "train" || s == "val" || s == "eval";
}

}  // namespace

std::vector<ManifestEntry> read_image_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || split_fields(line) != split_fields(kManifestHeader))
    throw Error(ErrorKind::SchemaViolation, path.string() + ":1: expected header " + kManifestHeader);
  std::vector<ManifestEntry> out;
  std::set<std::string> seen;
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line);
    const std::string where = path.string() + ":" + std::to_string(n) + ": ";
    if (f.size() != 5) throw Error(ErrorKind::SchemaViolation, where + "expected 5 fields");
    ManifestEntry e{f[0], f[1], f[2], f[3], f[4]};
    if (e.image_id.empty()) throw Error(ErrorKind::SchemaViolation, where + "field image_id is empty");
    if (e.path.empty()) throw Error(ErrorKind::SchemaViolation, where + "field path is empty");
    if (e.view != "frontal" && e.view != "other")
      throw Error(ErrorKind::SchemaViolation, where + "field view must be frontal or other");
    if (!valid_split(e.split)) throw Error(ErrorKind::SchemaViolation, where + "field split '" + e.split + "' is unknown");
    if (!seen.insert(e.image_id).second) throw Error(ErrorKind::DuplicateId, where + "image_id " + e.image_id);
    out.push_back(std::move(e));
  }
  return out;
}

void write_image_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out << kManifestHeader << '\n';
  for (const auto& e : entries)
    out << e.image_id << ',' << e.source << ',' << e.path << ',' << e.view << ',' << e.split << '\n';
}

void apply_reserved(std::vector<ManifestEntry>& entries, const std::set<std::string>& reserved_ids) {
  for (auto& e : entries) e.split = reserved_ids.count(e.image_id) ? "reserved" : "available";
}

std::set<std::string> read_id_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) ids.insert(line);
  }
  return ids;
}

void check_partition(const std::vector<std::vector<ManifestEntry>>& manifests) {
  std::map<std::string, bool> reserved;
  for (const auto& m : manifests) {
    std::set<std::string> seen;
    for (const auto& e : m) {
      if (!seen.insert(e.image_id).second) throw Error(ErrorKind::DuplicateId, "image_id " + e.image_id);
      const bool r = e.split == "reserved";
      auto [it, fresh] = reserved.emplace(e.image_id, r);
      if (!fresh && it->second != r)
        throw Error(ErrorKind::SchemaViolation, "image_id " + e.image_id + " is both reserved and available");
    }
  }
}

namespace {

[[noreturn]] void violation(const std::string& where, const std::string& field, const std::string& what) {
  throw Error(ErrorKind::SchemaViolation, where + "field " + field + ": " + what);
}

Point2d parse_point(const json& j, const std::string& where, const std::string& field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    violation(where, field, "expected [x, y]");
  Point2d p(j[0].get<double>(), j[1].get<double>());
  if (!is_finite(p)) violation(where, field, "coordinates must be finite");
  return p;
}

LabelRecord parse_record(const json& j, const std::string& where) {
  static const std::set<std::string> known = {"image_id", "landmarks", "boxes", "excluded", "reason", "width", "height"};
  if (!j.is_object()) throw Error(ErrorKind::SchemaViolation, where + "record must be an object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) violation(where, k, "unknown field");

  LabelRecord r;
  if (!j.contains("image_id") || !j["image_id"].is_string() || j["image_id"].get<std::string>().empty())
    violation(where, "image_id", "required non-empty string");
  r.image_id = j["image_id"].get<std::string>();

  if (j.contains("excluded")) {
    if (!j["excluded"].is_boolean()) violation(where, "excluded", "expected boolean");
    r.excluded = j["excluded"].get<bool>();
  }
  if (j.contains("reason") && !j["reason"].is_null()) {
    if (!j["reason"].is_string()) violation(where, "reason", "expected string");
    r.reason = j["reason"].get<std::string>();
  }
  if (r.excluded && r.reason.empty()) violation(where, "reason", "excluded records need a reason");

  if (j.contains("landmarks") && !j["landmarks"].is_null()) {
    const json& lm = j["landmarks"];
    if (!lm.is_object()) violation(where, "landmarks", "expected object");
    LandmarkSet<double> set;
    const std::pair<const char*, Point2d*> names[] = {
        {"top", &set.top}, {"bottom", &set.bottom}, {"left", &set.left}, {"right", &set.right}};
    for (auto [name, dst] : names) {
      if (!lm.contains(name)) violation(where, std::string("landmarks.") + name, "missing");
      *dst = parse_point(lm[name], where, std::string("landmarks.") + name);
    }
    try {
      validate(set);
    } catch (const Error& e) {
      violation(where, "landmarks", e.what());
    }
    r.landmarks = set;
  } else if (!r.excluded) {
    violation(where, "landmarks", "required unless excluded");
  }

  if (j.contains("boxes") && !j["boxes"].is_null()) {
    if (!j["boxes"].is_array()) violation(where, "boxes", "expected array");
    std::size_t i = 0;
    for (const json& b : j["boxes"]) {
      const std::string field = "boxes[" + std::to_string(i++) + "]";
      if (!b.is_array() || b.size() != 4) violation(where, field, "expected [x0, y0, x1, y1]");
      double v[4];
      for (int k = 0; k < 4; ++k) {
        if (!b[k].is_number()) violation(where, field, "expected numbers");
        v[k] = b[k].get<double>();
        if (!std::isfinite(v[k])) violation(where, field, "coordinates must be finite");
      }
      if (!(v[2] > v[0] && v[3] > v[1])) violation(where, field, "box has zero area");
      r.boxes.push_back({v[0], v[1], v[2], v[3]});
    }
  }
  return r;
}

}  // namespace

LabelImport parse_labels(std::istream& in, const std::string& origin) {
  LabelImport out;
  std::set<std::string> seen;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = origin + ":" + std::to_string(n) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw Error(ErrorKind::SchemaViolation, where + "not valid JSON");
    }
    LabelRecord r = parse_record(j, where);
    if (!seen.insert(r.image_id).second) throw Error(ErrorKind::DuplicateId, where + "image_id " + r.image_id);
    (r.excluded ? out.excluded : out.usable).push_back(std::move(r));
  }
  return out;
}

LabelImport import_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open labels " + path.string());
  return parse_labels(in, path.string());
}

std::string label_to_json(const LabelRecord& r) {
  json j;
  j["image_id"] = r.image_id;
  if (r.landmarks) {
    const auto& l = *r.landmarks;
    auto pt = [](const Point2d& p) { return json::array({p.x(), p.y()}); };
    j["landmarks"] = {{"top", pt(l.top)}, {"bottom", pt(l.bottom)}, {"left", pt(l.left)}, {"right", pt(l.right)}};
  } else {
    j["landmarks"] = nullptr;
  }
  j["boxes"] = json::array();
  for (const auto& b : r.boxes) j["boxes"].push_back({b.x0, b.y0, b.x1, b.y1});
  j["excluded"] = r.excluded;
  j["reason"] = r.reason.empty() ? json(nullptr) : json(r.reason);
  return j.dump();
}

void write_labels(const std::vector<LabelRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  for (const auto& r : records) out << label_to_json(r) << '\n';
}

}  // namespace geomask
