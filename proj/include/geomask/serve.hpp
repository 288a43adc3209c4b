#pragma once

// Static file and directory-listing endpoints for the browser annotator.
//
//   GET /<path>                  file under the session root
//   GET /api/list?path=<rel>     {"path": rel, "entries": [{"name", "type", "size"}]}

#include <filesystem>
#include <memory>
#include <string>

namespace httplib {
class Server;
}

namespace geomask {

/// JSON listing of `rel` under `root`, entries sorted by name. SchemaViolation
/// when `rel` escapes the root, IoFailure when it is not a directory.
std::string list_directory(const std::filesystem::path& root, const std::string& rel);

struct UiServer {
  explicit UiServer(std::filesystem::path root);
  ~UiServer();
  UiServer(const UiServer&) = delete;
  UiServer& operator=(const UiServer&) = delete;

  /// Binds to `port` (0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();

 private:
  std::filesystem::path root_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace geomask
