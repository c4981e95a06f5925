#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "palmar/clustering.hpp"
#include "palmar/preprocess.hpp"
#include "palmar/rng.hpp"
#include "palmar/simulator.hpp"

using namespace palmar;

namespace {

Frame spherical_frame(std::initializer_list<Vec3> pts) {
  Frame f;
  f.coords = Coords::spherical;
  f.points = pts;
  return f;
}

Frame cart_frame(std::vector<Vec3> pts, double t = 0.0) {
  Frame f;
  f.t = t;
  f.points = std::move(pts);
  return f;
}

GridSpec unit_grid(int nx, int ny, int nz, double cell = 1.0) {
  GridSpec g;
  g.origin = Vec3::Zero();
  g.cell_size = Vec3::Constant(cell);
  g.dims = Vec3i(nx, ny, nz);
  return g;
}

}  // namespace

TEST_CASE("spherical axis cases under the declared convention") {
  auto out = spherical_to_cartesian(spherical_frame({Vec3(1.0, 0.0, 0.0)}));
  CHECK(out.points[0].isApprox(Vec3(0, 1, 0), 1e-12));

  out = spherical_to_cartesian(spherical_frame({Vec3(2.0, M_PI / 2, 0.0)}));
  CHECK((out.points[0] - Vec3(2, 0, 0)).norm() < 1e-12);

  out = spherical_to_cartesian(spherical_frame({Vec3(1.0, 0.0, M_PI / 2)}));
  CHECK((out.points[0] - Vec3(0, 0, 1)).norm() < 1e-12);
}

TEST_CASE("spherical conversion preserves count and norm") {
  auto rng = make_rng(7, 1);
  std::uniform_real_distribution<double> r_dist(0.0, 30.0), a_dist(-M_PI, M_PI),
      e_dist(-M_PI / 2, M_PI / 2);
  Frame f;
  f.coords = Coords::spherical;
  for (int i = 0; i < 200; ++i) f.points.emplace_back(r_dist(rng), a_dist(rng), e_dist(rng));
  Frame out = spherical_to_cartesian(f);
  REQUIRE(out.points.size() == f.points.size());
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    double r = f.points[i][0];
    CHECK(std::abs(out.points[i].norm() - r) <= 1e-12 * std::max(1.0, r));
  }
}

TEST_CASE("negative range is rejected") {
  CHECK_THROWS_AS(spherical_to_cartesian(spherical_frame({Vec3(-0.5, 0, 0)})), ValidationError);
}

TEST_CASE("background frequencies count occupancy fractions") {
  GridSpec g = unit_grid(2, 1, 1);
  std::vector<Frame> frames;
  for (int i = 0; i < 10; ++i) {
    Frame f;
    f.points.emplace_back(0.5, 0.5, 0.5);        // cell 0 always occupied
    if (i < 3) f.points.emplace_back(1.5, 0.5, 0.5);  // cell 1 in 3/10 frames
    frames.push_back(std::move(f));
  }
  BackgroundModel m = build_background(frames, g);
  CHECK(m.at(Vec3i(0, 0, 0)) == doctest::Approx(1.0));
  CHECK(m.at(Vec3i(1, 0, 0)) == doctest::Approx(0.3));

  BackgroundModel empty_cells = build_background({cart_frame({})}, g);
  CHECK(empty_cells.frequency.maxCoeff() == 0.0);

  CHECK_THROWS_AS(build_background({}, g), ValidationError);
}

TEST_CASE("subtract_background removes static cells and clamps range") {
  GridSpec g = unit_grid(4, 4, 1);
  std::vector<Frame> calib(10, cart_frame({Vec3(0.5, 0.5, 0.5)}));
  BackgroundModel m = build_background(calib, g);

  Frame f = cart_frame({Vec3(0.5, 0.5, 0.5), Vec3(2.5, 2.5, 0.5), Vec3(0.05, 0.05, 0.05)});
  Frame out = subtract_background(f, m, 0.8);
  REQUIRE(out.points.size() == 1);  // static cell removed, sub-min-range point removed
  CHECK(out.points[0] == Vec3(2.5, 2.5, 0.5));

  // all points static -> empty frame
  Frame all_static = cart_frame({Vec3(0.5, 0.5, 0.5)});
  CHECK(subtract_background(all_static, m, 0.8).points.empty());

  // output is a subset of the input
  for (const Vec3& p : out.points)
    CHECK(std::find(f.points.begin(), f.points.end(), p) != f.points.end());
}

TEST_CASE("subtract_background separates a walker from a static wall (simulator)") {
  auto cfg = find_scenario("single");
  REQUIRE(cfg);
  cfg->seed = 11;
  ScenarioOutput bg = generate_background(*cfg, 50);
  ScenarioOutput scene = generate(*cfg);

  GridSpec grid = bounding_grid(bg.frames, 0.10);
  BackgroundModel model = build_background(bg.frames, grid);

  // Pick a frame where the walker is present.
  std::size_t fi = 30;
  REQUIRE(scene.truth[fi].persons.size() == 1);
  const Frame& raw = scene.frames[fi];
  Frame cleaned = subtract_background(raw, model, 0.8);

  int walker_total = 0, walker_kept = 0, wall_kept = 0;
  for (std::size_t p = 0; p < raw.points.size(); ++p) {
    bool is_walker = scene.owners[fi][p] >= 0;
    bool kept = std::find(cleaned.points.begin(), cleaned.points.end(), raw.points[p]) !=
                cleaned.points.end();
    if (is_walker) {
      ++walker_total;
      if (kept) ++walker_kept;
    } else if (kept) {
      ++wall_kept;
    }
  }
  CHECK(walker_kept > 0.9 * walker_total);
  CHECK(wall_kept < 0.1 * (raw.points.size() - walker_total));
}

TEST_CASE("voxelize: average, adm, and empty-frame behaviors") {
  GridSpec g = unit_grid(3, 3, 1);

  VoxelGrid one = voxelize(cart_frame({Vec3(0.5, 0.5, 0.5)}), g, VoxelMapping::average);
  CHECK(one.values[g.linear(Vec3i(0, 0, 0))] == doctest::Approx(1.0));
  CHECK(one.values.sum() == doctest::Approx(1.0));
  CHECK(one.occupied_cells() == 1);

  VoxelGrid empty = voxelize(cart_frame({}), g, VoxelMapping::average);
  CHECK(empty.values.cwiseAbs().maxCoeff() == 0.0);

  VoxelGrid adm = voxelize(
      cart_frame({Vec3(0.5, 0.2, 0.5), Vec3(0.5, 0.9, 0.5), Vec3(0.6, 0.2, 0.5),
                  Vec3(0.6, 0.9, 0.5)}),
      g, VoxelMapping::adm);
  // depths {0.2, 0.9, 0.2, 0.9} in one cell -> mean 0.55
  CHECK(adm.values[g.linear(Vec3i(0, 0, 0))] == doctest::Approx(0.55));
}

TEST_CASE("voxelize adm example: depths 1,1,3,3 average to 2") {
  GridSpec g = unit_grid(1, 4, 1);
  g.cell_size = Vec3(1.0, 4.0, 1.0);
  VoxelGrid adm = voxelize(
      cart_frame({Vec3(0.5, 1.0, 0.5), Vec3(0.5, 1.0, 0.5), Vec3(0.5, 3.0, 0.5),
                  Vec3(0.5, 3.0, 0.5)}),
      g, VoxelMapping::adm);
  CHECK(adm.values[0] == doctest::Approx(2.0));
}

TEST_CASE("voxelize counts out-of-bounds points") {
  GridSpec g = unit_grid(2, 2, 2);
  VoxelGrid vg = voxelize(cart_frame({Vec3(0.5, 0.5, 0.5), Vec3(5, 5, 5), Vec3(-1, 0, 0)}), g,
                          VoxelMapping::average);
  CHECK(vg.discarded == 2);
  CHECK(vg.counts.sum() == 1);
}

TEST_CASE("axor marks parity contrast and keeps empty cells at zero") {
  GridSpec g = unit_grid(3, 1, 1);
  // Cell 0: 1 point (odd), neighbors even -> contrast 1.0.
  // Cell 1: 2 points (even), neighbor parities odd+even -> tie counts even ->
  //   no contrast -> normalized occupancy 2/2 = 1. Cell 2 empty -> 0.
  VoxelGrid vg = voxelize(
      cart_frame({Vec3(0.5, 0.5, 0.5), Vec3(1.5, 0.5, 0.5), Vec3(1.6, 0.5, 0.5)}), g,
      VoxelMapping::axor);
  CHECK(vg.values[0] == doctest::Approx(1.0));
  CHECK(vg.values[1] == doctest::Approx(1.0));
  CHECK(vg.values[2] == 0.0);

  // An isolated even cell keeps plain occupancy.
  VoxelGrid even = voxelize(cart_frame({Vec3(0.5, 0.5, 0.5), Vec3(0.6, 0.5, 0.5)}), g,
                            VoxelMapping::axor);
  CHECK(even.values[0] == doctest::Approx(1.0));  // 2/2 occupancy, no contrast
  CHECK(even.counts[0] == 2);
}

TEST_CASE("voxelize is permutation invariant") {
  auto rng = make_rng(3, 2);
  std::uniform_real_distribution<double> coord(0.0, 3.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 120; ++i) pts.emplace_back(coord(rng), coord(rng), coord(rng));
  GridSpec g = unit_grid(3, 3, 3);
  VoxelGrid a = voxelize(cart_frame(pts), g, VoxelMapping::average);
  std::shuffle(pts.begin(), pts.end(), rng);
  VoxelGrid b = voxelize(cart_frame(pts), g, VoxelMapping::average);
  CHECK(a.values == b.values);
  CHECK(a.counts == b.counts);
}

TEST_CASE("occupied cells never exceed the point count") {
  auto rng = make_rng(5, 3);
  std::uniform_real_distribution<double> coord(0.0, 8.0);
  GridSpec g = unit_grid(8, 8, 8);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<Vec3> pts;
    int n = 1 + static_cast<int>(rng() % 300);
    for (int i = 0; i < n; ++i) pts.emplace_back(coord(rng), coord(rng), coord(rng));
    VoxelGrid vg = voxelize(cart_frame(pts), g, VoxelMapping::average);
    CHECK(vg.occupied_cells() <= n);
  }
}

TEST_CASE("trim_frames keeps only frames with a large enough cluster") {
  GridSpec g = unit_grid(30, 30, 3, 0.1);
  PersonClusterConfig cc;
  cc.min_cells = 10;
  cc.min_pts = 3;

  // A dense 200-cell blob versus an all-empty frame.
  std::vector<Vec3> blob;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) {
      blob.emplace_back(0.05 + 0.1 * i, 0.05 + 0.1 * j, 0.05);
      blob.emplace_back(0.05 + 0.1 * i, 0.05 + 0.1 * j, 0.15);
    }
  VoxelGrid big = voxelize(cart_frame(blob), g, VoxelMapping::average);
  VoxelGrid none = voxelize(cart_frame({}), g, VoxelMapping::average);

  auto predicate = [&](const VoxelGrid& vg) { return largest_cluster_cells(vg, cc); };
  auto kept = trim_frames({none, big, none}, 50, predicate);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].occupied_cells() == big.occupied_cells());

  CHECK(trim_frames({none, none}, 1, predicate).empty());
}

TEST_CASE("trim_frames drops the exit interval of a simulator scene") {
  auto cfg = find_scenario("single");
  REQUIRE(cfg);
  cfg->seed = 4;
  cfg->duration = 20.0;  // walker exits at 16.4 s, tail is person-free
  ScenarioOutput scene = generate(*cfg);

  GridSpec grid = bounding_grid(scene.frames, 0.10);
  BackgroundModel model = build_background(generate_background(*cfg, 30).frames,
                                           grid);
  PersonClusterConfig cc;
  std::vector<VoxelGrid> voxels;
  for (const Frame& f : scene.frames)
    voxels.push_back(voxelize(subtract_background(f, model, 0.8), grid, VoxelMapping::average));

  auto kept = trim_frames(voxels, cc.min_cells,
                          [&](const VoxelGrid& vg) { return largest_cluster_cells(vg, cc); });

  std::size_t person_frames = 0;
  for (const TruthFrame& tf : scene.truth) person_frames += tf.persons.empty() ? 0 : 1;
  CHECK(kept.size() <= person_frames);
  CHECK(kept.size() > 0.8 * person_frames);
}

TEST_CASE("resolution presets") {
  CHECK(grid_resolution_preset("default") == doctest::Approx(0.10));
  CHECK(grid_resolution_preset("lidar") == doctest::Approx(0.3));
  CHECK(grid_resolution_preset("mmwave") == doctest::Approx(0.5));
  CHECK_THROWS_AS(grid_resolution_preset("nope"), ConfigError);
}
