#include <fstream>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include "geomask/error.hpp"
#include "geomask/serve.hpp"
#include "oracles.hpp"

using namespace geomask;
namespace fs = std::filesystem;

class Serve : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = oracle::temp_dir("serve");
    fs::create_directories(root_ / "images" / "nested");
    std::ofstream(root_ / "images" / "b.png") << "0123456789";
    std::ofstream(root_ / "images" / "a.png") << "x";
    std::ofstream(root_ / "labels.jsonl") << "{\"image_id\":\"a\"}\n";
    std::ofstream(root_ / "manifest.csv") << "image_id,source,path,view,split\n";
  }
  void TearDown() override { fs::remove_all(root_); }
  fs::path root_;
};

TEST_F(Serve, ListingIsSortedWithSizes) {
  const auto j = nlohmann::json::parse(list_directory(root_, "images"));
  EXPECT_EQ(j["path"], "images");
  ASSERT_EQ(j["entries"].size(), 3u);
  EXPECT_EQ(j["entries"][0]["name"], "a.png");
  EXPECT_EQ(j["entries"][1]["name"], "b.png");
  EXPECT_EQ(j["entries"][1]["size"], 10);
  EXPECT_EQ(j["entries"][1]["type"], "file");
  EXPECT_EQ(j["entries"][2]["name"], "nested");
  EXPECT_EQ(j["entries"][2]["type"], "dir");

  const auto top = nlohmann::json::parse(list_directory(root_, ""));
  EXPECT_EQ(top["entries"].size(), 3u);
}

TEST_F(Serve, ListingStaysInsideRoot) {
  for (const char* rel : {"..", "../", "images/../..", "/etc"}) {
    try {
      list_directory(root_, rel);
      if (std::string(rel) != "/etc") ADD_FAILURE() << rel;
    } catch (const Error& e) {
      EXPECT_TRUE(e.kind() == ErrorKind::SchemaViolation || e.kind() == ErrorKind::IoFailure) << rel;
    }
  }
  try {
    list_directory(root_, "../..");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchemaViolation);
  }
  try {
    list_directory(root_, "images/a.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IoFailure);
  }
}

TEST_F(Serve, HttpEndpoints) {
  UiServer server(root_);
  const int port = server.bind("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  std::thread t([&] { server.listen(); });

  httplib::Client cli("127.0.0.1", port);
  cli.set_connection_timeout(5);
  httplib::Result r;
  for (int i = 0; i < 50 && !(r = cli.Get("/labels.jsonl")); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->body, "{\"image_id\":\"a\"}\n");
  EXPECT_EQ(r->get_header_value("Content-Type"), "application/x-ndjson");

  auto png = cli.Get("/images/b.png");
  ASSERT_TRUE(png);
  EXPECT_EQ(png->status, 200);
  EXPECT_EQ(png->body, "0123456789");
  EXPECT_EQ(png->get_header_value("Content-Type"), "image/png");

  auto csv = cli.Get("/manifest.csv");
  ASSERT_TRUE(csv);
  EXPECT_EQ(csv->get_header_value("Content-Type"), "text/csv");

  auto list = cli.Get("/api/list?path=images");
  ASSERT_TRUE(list);
  EXPECT_EQ(list->status, 200);
  EXPECT_EQ(nlohmann::json::parse(list->body)["entries"].size(), 3u);

  auto escape = cli.Get("/api/list?path=..");
  ASSERT_TRUE(escape);
  EXPECT_EQ(escape->status, 403);
  auto missing = cli.Get("/api/list?path=nope");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  auto nofile = cli.Get("/nope.png");
  ASSERT_TRUE(nofile);
  EXPECT_EQ(nofile->status, 404);

  server.stop();
  t.join();
}

TEST(ServeRoot, MustBeADirectory) { EXPECT_THROW(UiServer("/nonexistent/root"), Error); }
