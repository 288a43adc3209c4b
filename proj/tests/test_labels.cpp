#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "geomask/labels.hpp"
#include "geomask/random.hpp"
#include "oracles.hpp"

using namespace geomask;

namespace {

std::string record(const std::string& id, double dx = 0) {
  std::ostringstream os;
  os << R"({"image_id":")" << id << R"(","landmarks":{"top":[)" << 30 + dx << R"(,10],"bottom":[)" << 30 + dx
     << R"(,50],"left":[10,30],"right":[50,30]},"boxes":[[1,2,5,6]],"excluded":false,"reason":null})";
  return os.str();
}

std::string excluded(const std::string& id) {
  return R"({"image_id":")" + id + R"(","landmarks":null,"boxes":[],"excluded":true,"reason":"insufficient clinical information"})";
}

LabelImport parse(const std::string& text) {
  std::istringstream in(text);
  return parse_labels(in, "mem");
}

void expect_error(const std::string& text, ErrorKind kind, const std::string& needle) {
  try {
    parse(text);
    ADD_FAILURE() << "accepted: " << text;
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(Labels, ThreeValidRecords) {
  const LabelImport li = parse(record("a") + "\n" + record("b", 1) + "\n\n" + record("c", 2) + "\n");
  ASSERT_EQ(li.usable.size(), 3u);
  EXPECT_TRUE(li.excluded.empty());
  EXPECT_EQ(li.usable[1].image_id, "b");
  ASSERT_TRUE(li.usable[1].landmarks.has_value());
  EXPECT_EQ(li.usable[1].landmarks->top, Point2d(31, 10));
  ASSERT_EQ(li.usable[0].boxes.size(), 1u);
  EXPECT_EQ(li.usable[0].boxes[0].x1, 5);
}

TEST(Labels, ExcludedRecordsNeedNoLandmarks) {
  const LabelImport li = parse(excluded("x") + "\n" + record("y"));
  ASSERT_EQ(li.excluded.size(), 1u);
  EXPECT_EQ(li.excluded[0].reason, "insufficient clinical information");
  EXPECT_FALSE(li.excluded[0].landmarks.has_value());
  EXPECT_EQ(li.usable.size(), 1u);
}

TEST(Labels, NinetyPercentUsableCohort) {
  std::string text;
  for (int i = 0; i < 1000; ++i) text += (i < 87 ? excluded("e" + std::to_string(i)) : record("r" + std::to_string(i))) + "\n";
  const LabelImport li = parse(text);
  EXPECT_EQ(li.usable.size(), 913u);
  EXPECT_EQ(li.excluded.size(), 87u);
}

TEST(Labels, CoincidentTopAndBottomNamesTheInvariant) {
  expect_error(
      R"({"image_id":"a","landmarks":{"top":[5,5],"bottom":[5,5],"left":[1,2],"right":[9,2]},"boxes":[],"excluded":false})",
      ErrorKind::SchemaViolation, "mem:1: field landmarks: DegenerateLandmarks: top and bottom coincide");
}

TEST(Labels, SchemaViolationsCarryLineAndField) {
  const std::string ok = record("ok") + "\n";
  expect_error(ok + "{not json", ErrorKind::SchemaViolation, "mem:2: not valid JSON");
  expect_error(ok + "[1,2]", ErrorKind::SchemaViolation, "mem:2: record must be an object");
  expect_error(R"({"landmarks":null,"excluded":true,"reason":"r"})", ErrorKind::SchemaViolation, "field image_id");
  expect_error(R"({"image_id":"a"})", ErrorKind::SchemaViolation, "field landmarks: required unless excluded");
  expect_error(R"({"image_id":"a","excluded":true})", ErrorKind::SchemaViolation, "field reason");
  expect_error(R"({"image_id":"a","excluded":"yes","reason":"r"})", ErrorKind::SchemaViolation, "field excluded");
  expect_error(R"({"image_id":"a","landmarks":{"top":[1,2],"bottom":[1,9],"left":[0,5]}})", ErrorKind::SchemaViolation,
               "field landmarks.right: missing");
  expect_error(R"({"image_id":"a","landmarks":{"top":[1],"bottom":[1,9],"left":[0,5],"right":[3,5]}})",
               ErrorKind::SchemaViolation, "field landmarks.top");
  expect_error(R"({"image_id":"a","excluded":true,"reason":"r","boxes":[[0,0,1]]})", ErrorKind::SchemaViolation,
               "field boxes[0]");
  expect_error(R"({"image_id":"a","excluded":true,"reason":"r","boxes":[[0,0,4,4],[3,3,3,5]]})",
               ErrorKind::SchemaViolation, "field boxes[1]: box has zero area");
  expect_error(R"({"image_id":"a","excluded":true,"reason":"r","colour":"red"})", ErrorKind::SchemaViolation,
               "field colour: unknown field");
}

TEST(Labels, DuplicateIdsAreRejected) {
  expect_error(record("a") + "\n" + excluded("a") + "\n", ErrorKind::DuplicateId, "mem:2:");
}

TEST(Labels, SerializeRoundTrip) {
  Rng rng(3);
  std::vector<LabelRecord> recs;
  for (int i = 0; i < 50; ++i) {
    LabelRecord r;
    r.image_id = "img" + std::to_string(i);
    if (i % 7 == 0) {
      r.excluded = true;
      r.reason = "view, \"lateral\"";
    } else {
      r.landmarks = LandmarkSetd{Point2d(rng.uniform(0, 500), rng.uniform(0, 200)),
                                 Point2d(rng.uniform(0, 500), rng.uniform(300, 500)),
                                 Point2d(rng.uniform(0, 200), rng.uniform(0, 500)),
                                 Point2d(rng.uniform(300, 500), rng.uniform(0, 500))};
    }
    for (int k = 0; k < i % 3; ++k) {
      const double x = rng.uniform(0, 400), y = rng.uniform(0, 400);
      r.boxes.push_back({x, y, x + rng.uniform(1, 50), y + rng.uniform(1, 50)});
    }
    recs.push_back(r);
  }
  const auto dir = oracle::temp_dir("labels");
  write_labels(recs, dir / "l.jsonl");
  const LabelImport back = import_labels(dir / "l.jsonl");
  ASSERT_EQ(back.usable.size() + back.excluded.size(), recs.size());
  std::size_t u = 0, e = 0;
  for (const auto& r : recs) {
    const LabelRecord& b = r.excluded ? back.excluded[e++] : back.usable[u++];
    EXPECT_EQ(b.image_id, r.image_id);
    EXPECT_EQ(b.reason, r.reason);
    ASSERT_EQ(b.landmarks.has_value(), r.landmarks.has_value());
    if (r.landmarks) {
      EXPECT_EQ(b.landmarks->top, r.landmarks->top);
      EXPECT_EQ(b.landmarks->right, r.landmarks->right);
    }
    ASSERT_EQ(b.boxes.size(), r.boxes.size());
    for (std::size_t k = 0; k < r.boxes.size(); ++k) {
      EXPECT_EQ(b.boxes[k].x0, r.boxes[k].x0);
      EXPECT_EQ(b.boxes[k].y1, r.boxes[k].y1);
    }
    EXPECT_EQ(label_to_json(b), label_to_json(r));
  }
  EXPECT_THROW(import_labels(dir / "missing.jsonl"), Error);
  std::filesystem::remove_all(dir);
}

class Manifest : public ::testing::Test {
 protected:
  void SetUp() override { dir_ = oracle::temp_dir("manifest"); }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  void write(const std::string& body) { std::ofstream(dir_ / "m.csv") << body; }
  void expect_error(const std::string& body, ErrorKind kind, const std::string& needle) {
    write(body);
    try {
      read_image_manifest(dir_ / "m.csv");
      ADD_FAILURE() << "accepted: " << body;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), kind) << e.what();
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  }

  std::filesystem::path dir_;
};

TEST_F(Manifest, RoundTrip) {
  std::vector<ManifestEntry> m{{"a", "site1", "img/a.png", "frontal", "available"},
                               {"b", "site2", "img/b.png", "other", "reserved"},
                               {"c", "site1", "c.pgm", "frontal", "eval"}};
  write_image_manifest(m, dir_ / "out.csv");
  EXPECT_EQ(read_image_manifest(dir_ / "out.csv"), m);
}

TEST_F(Manifest, Violations) {
  const std::string h = "image_id,source,path,view,split\n";
  expect_error("id,path\n", ErrorKind::SchemaViolation, ":1: expected header");
  expect_error(h + "a,s,p,frontal\n", ErrorKind::SchemaViolation, ":2: expected 5 fields");
  expect_error(h + ",s,p,frontal,train\n", ErrorKind::SchemaViolation, "field image_id");
  expect_error(h + "a,s,,frontal,train\n", ErrorKind::SchemaViolation, "field path");
  expect_error(h + "a,s,p,lateral,train\n", ErrorKind::SchemaViolation, "field view");
  expect_error(h + "a,s,p,frontal,test\n", ErrorKind::SchemaViolation, "field split");
  expect_error(h + "a,s,p,frontal,train\na,s,q,frontal,val\n", ErrorKind::DuplicateId, ":3:");
  EXPECT_THROW(read_image_manifest(dir_ / "none.csv"), Error);
}

TEST_F(Manifest, ReservedPartition) {
  std::vector<ManifestEntry> m{{"a", "s", "a.png", "frontal", ""},
                               {"b", "s", "b.png", "frontal", ""},
                               {"c", "s", "c.png", "frontal", ""}};
  std::ofstream(dir_ / "ids.txt") << "b\r\n\nz\n";
  const auto ids = read_id_list(dir_ / "ids.txt");
  EXPECT_EQ(ids, (std::set<std::string>{"b", "z"}));
  apply_reserved(m, ids);
  EXPECT_EQ(m[0].split, "available");
  EXPECT_EQ(m[1].split, "reserved");

  auto other = m;
  EXPECT_NO_THROW(check_partition({m, other}));
  other[1].split = "available";
  try {
    check_partition({m, other});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchemaViolation);
  }
  auto dup = m;
  dup.push_back(m[0]);
  try {
    check_partition({dup});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DuplicateId);
  }
}
