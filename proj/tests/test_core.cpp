#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "palmar/frame_io.hpp"
#include "palmar/rng.hpp"
#include "palmar/types.hpp"

using namespace palmar;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("palmar_core_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::vector<Frame> random_frames(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coord(-50.0, 50.0);
  std::uniform_int_distribution<int> npts(0, 40);
  std::vector<Frame> frames;
  double t = 0.0;
  for (int i = 0; i < n; ++i) {
    Frame f;
    t += std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    f.t = t;
    f.sensor = static_cast<Sensor>(i % 3);
    int k = npts(rng);
    for (int p = 0; p < k; ++p) f.points.emplace_back(coord(rng), coord(rng), coord(rng));
    frames.push_back(std::move(f));
  }
  return frames;
}

bool frames_equal(const std::vector<Frame>& a, const std::vector<Frame>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].t != b[i].t || a[i].sensor != b[i].sensor ||
        a[i].points.size() != b[i].points.size())
      return false;
    for (std::size_t p = 0; p < a[i].points.size(); ++p)
      if (a[i].points[p] != b[i].points[p]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("read_frames parses a single minimal line") {
  TempDir dir;
  write_text(dir.file("a.jsonl"), "{\"t\":0.0,\"points\":[[1,2,3]]}\n");
  auto frames = read_frames(dir.file("a.jsonl"));
  REQUIRE(frames.size() == 1);
  REQUIRE(frames[0].points.size() == 1);
  CHECK(frames[0].points[0] == Vec3(1, 2, 3));
  CHECK(frames[0].sensor == Sensor::synthetic);
}

TEST_CASE("read_frames on an empty file yields an empty sequence") {
  TempDir dir;
  write_text(dir.file("empty.jsonl"), "");
  CHECK(read_frames(dir.file("empty.jsonl")).empty());
}

TEST_CASE("read_frames rejects non-monotone timestamps") {
  TempDir dir;
  write_text(dir.file("bad.jsonl"),
             "{\"t\":1.0,\"points\":[]}\n{\"t\":0.5,\"points\":[]}\n");
  CHECK_THROWS_AS(read_frames(dir.file("bad.jsonl")), ValidationError);
}

TEST_CASE("read_frames reports the offending line number") {
  TempDir dir;
  write_text(dir.file("bad.jsonl"), "{\"t\":0.0,\"points\":[]}\nnot json\n");
  try {
    read_frames(dir.file("bad.jsonl"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
}

TEST_CASE("write_frames emits empty point arrays and round-trips") {
  TempDir dir;
  Frame f;
  f.t = 1.5;
  write_frames({f}, dir.file("z.jsonl"));
  std::ifstream in(dir.file("z.jsonl"));
  std::string line;
  std::getline(in, line);
  CHECK(line.find("\"points\":[]") != std::string::npos);
  auto back = read_frames(dir.file("z.jsonl"));
  REQUIRE(back.size() == 1);
  CHECK(back[0].points.empty());
}

TEST_CASE("write_frames rejects non-finite coordinates") {
  TempDir dir;
  Frame f;
  f.points.emplace_back(0.0, std::nan(""), 0.0);
  CHECK_THROWS_AS(write_frames({f}, dir.file("nan.jsonl")), ValidationError);
}

TEST_CASE("serialization round-trip is the identity on random frames") {
  TempDir dir;
  auto rng = make_rng(42, 0);
  for (int rep = 0; rep < 25; ++rep) {
    auto frames = random_frames(6, rng);
    write_frames(frames, dir.file("rt.jsonl"));
    auto back = read_frames(dir.file("rt.jsonl"));
    CHECK(frames_equal(frames, back));
  }
}

TEST_CASE("ground truth round-trips") {
  TempDir dir;
  GroundTruth truth;
  TruthFrame tf;
  tf.t = 0.25;
  tf.persons.push_back({3, Vec3(1.5, 2.5, 1.6), "walking"});
  tf.persons.push_back({5, Vec3(-1.0, 4.0, 1.55), "bending"});
  truth.push_back(tf);
  write_ground_truth(truth, dir.file("gt.jsonl"));
  GroundTruth back = read_ground_truth(dir.file("gt.jsonl"));
  REQUIRE(back.size() == 1);
  REQUIRE(back[0].persons.size() == 2);
  CHECK(back[0].persons[0].id == 3);
  CHECK(back[0].persons[0].head == Vec3(1.5, 2.5, 1.6));
  CHECK(back[0].persons[1].activity == "bending");
}

TEST_CASE("GridSpec cell math") {
  GridSpec g;
  g.origin = Vec3(-1.0, -1.0, 0.0);
  g.cell_size = Vec3(0.5, 0.5, 0.5);
  g.dims = Vec3i(4, 4, 2);
  g.validate();
  CHECK(g.num_cells() == 32);
  CHECK(g.cell_of(Vec3(-1.0, -1.0, 0.0)) == Vec3i(0, 0, 0));
  CHECK(g.cell_of(Vec3(0.99, 0.99, 0.99)) == Vec3i(3, 3, 1));
  CHECK_FALSE(g.contains(Vec3(1.01, 0.0, 0.0)));
  Vec3i c(2, 1, 1);
  CHECK(g.unlinear(g.linear(c)) == c);
  CHECK(g.cell_center(Vec3i(0, 0, 0)) == Vec3(-0.75, -0.75, 0.25));

  GridSpec bad = g;
  bad.cell_size.y() = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("seed splitting is stable and stream-separated") {
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}
