#include "geomask/serve.hpp"

#include <algorithm>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "geomask/error.hpp"

namespace geomask {

namespace fs = std::filesystem;

namespace {

// Resolves `rel` under `root`, refusing anything that climbs out of it.
fs::path resolve(const fs::path& root, const std::string& rel) {
  const fs::path base = fs::weakly_canonical(root);
  const fs::path full = fs::weakly_canonical(base / fs::path(rel).relative_path());
  auto [b, f] = std::mismatch(base.begin(), base.end(), full.begin(), full.end());
  if (b != base.end()) throw Error(ErrorKind::SchemaViolation, "path '" + rel + "' leaves the session root");
  return full;
}

}  // namespace

std::string list_directory(const fs::path& root, const std::string& rel) {
  const fs::path dir = resolve(root, rel);
  if (!fs::is_directory(dir)) throw Error(ErrorKind::IoFailure, "'" + rel + "' is not a directory");
  std::vector<nlohmann::ordered_json> entries;
  for (const auto& de : fs::directory_iterator(dir)) {
    nlohmann::ordered_json e;
    e["name"] = de.path().filename().string();
    e["type"] = de.is_directory() ? "dir" : "file";
    e["size"] = de.is_regular_file() ? static_cast<std::uint64_t>(de.file_size()) : 0;
    entries.push_back(std::move(e));
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a["name"].template get<std::string>() < b["name"].template get<std::string>(); });
  nlohmann::ordered_json out;
  out["path"] = rel;
  out["entries"] = entries;
  return out.dump();
}

UiServer::UiServer(fs::path root) : root_(std::move(root)), server_(std::make_unique<httplib::Server>()) {
  if (!fs::is_directory(root_)) throw Error(ErrorKind::IoFailure, "session root " + root_.string() + " is not a directory");
  server_->Get("/api/list", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string rel = req.has_param("path") ? req.get_param_value("path") : "";
    try {
      res.set_content(list_directory(root_, rel), "application/json");
    } catch (const Error& e) {
      res.status = e.kind() == ErrorKind::SchemaViolation ? 403 : 404;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    }
  });
  server_->set_mount_point("/", root_.string());
  server_->set_file_extension_and_mimetype_mapping("jsonl", "application/x-ndjson");
  server_->set_file_extension_and_mimetype_mapping("csv", "text/csv");
}

UiServer::~UiServer() { stop(); }

int UiServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorKind::IoFailure, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void UiServer::listen() { server_->listen_after_bind(); }

void UiServer::stop() {
  if (server_) server_->stop();
}

}  // namespace geomask
