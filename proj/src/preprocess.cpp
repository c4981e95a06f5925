#include "palmar/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace palmar {

Frame spherical_to_cartesian(const Frame& frame) {
  if (frame.coords != Coords::spherical)
    throw ValidationError("spherical_to_cartesian: frame is not in spherical form");
  Frame out = frame;
  out.coords = Coords::cartesian;
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const double r = frame.points[i][0];
    const double az = frame.points[i][1];
    const double el = frame.points[i][2];
    if (r < 0.0) throw ValidationError("spherical_to_cartesian: negative range");
    out.points[i] = Vec3(r * std::cos(el) * std::sin(az),
                         r * std::cos(el) * std::cos(az),
                         r * std::sin(el));
  }
  return out;
}

BackgroundModel build_background(const std::vector<Frame>& frames, const GridSpec& grid) {
  if (frames.empty()) throw ValidationError("build_background: no calibration frames");
  grid.validate();
  BackgroundModel model;
  model.grid = grid;
  model.frequency = VecX::Zero(grid.num_cells());
  std::vector<char> seen(static_cast<std::size_t>(grid.num_cells()));
  for (const Frame& f : frames) {
    std::fill(seen.begin(), seen.end(), 0);
    for (const Vec3& p : f.points) {
      Vec3i c = grid.cell_of(p);
      if (grid.in_bounds(c)) seen[static_cast<std::size_t>(grid.linear(c))] = 1;
    }
    for (long i = 0; i < grid.num_cells(); ++i)
      if (seen[static_cast<std::size_t>(i)]) model.frequency[i] += 1.0;
  }
  model.frequency /= static_cast<double>(frames.size());
  return model;
}

Frame subtract_background(const Frame& frame, const BackgroundModel& model,
                          double threshold, const RangeClamp& clamp) {
  Frame out = frame;
  out.points.clear();
  for (const Vec3& p : frame.points) {
    const double range = p.norm();
    if (range < clamp.min_range || range > clamp.max_range) continue;
    Vec3i c = model.grid.cell_of(p);
    if (model.grid.in_bounds(c) && model.at(c) >= threshold) continue;
    out.points.push_back(p);
  }
  return out;
}

VoxelMapping voxel_mapping_from_string(const std::string& s) {
  if (s == "average") return VoxelMapping::average;
  if (s == "adm") return VoxelMapping::adm;
  if (s == "axor") return VoxelMapping::axor;
  throw ConfigError("unknown voxel mapping: " + s);
}

std::string to_string(VoxelMapping m) {
  switch (m) {
    case VoxelMapping::average: return "average";
    case VoxelMapping::adm: return "adm";
    case VoxelMapping::axor: return "axor";
  }
  return "average";
}

std::vector<Vec3> VoxelGrid::occupied_centers() const {
  std::vector<Vec3> centers;
  for (long i = 0; i < counts.size(); ++i)
    if (counts[i] > 0) centers.push_back(grid.cell_center(grid.unlinear(i)));
  return centers;
}

std::vector<long> VoxelGrid::occupied_indices() const {
  std::vector<long> idx;
  for (long i = 0; i < counts.size(); ++i)
    if (counts[i] > 0) idx.push_back(i);
  return idx;
}

namespace {

// Majority parity of the in-bounds 6-neighborhood; ties count as even.
bool majority_parity_odd(const Eigen::VectorXi& counts, const GridSpec& grid, const Vec3i& c) {
  static const Vec3i offsets[6] = {Vec3i(1, 0, 0),  Vec3i(-1, 0, 0), Vec3i(0, 1, 0),
                                   Vec3i(0, -1, 0), Vec3i(0, 0, 1),  Vec3i(0, 0, -1)};
  int odd = 0, even = 0;
  for (const Vec3i& d : offsets) {
    Vec3i n = c + d;
    if (!grid.in_bounds(n)) continue;
    (counts[grid.linear(n)] % 2 != 0 ? odd : even) += 1;
  }
  return odd > even;
}

}  // namespace

VoxelGrid voxelize(const Frame& frame, const GridSpec& grid, VoxelMapping mode) {
  if (frame.coords != Coords::cartesian)
    throw ValidationError("voxelize: frame must be Cartesian");
  grid.validate();
  VoxelGrid vg;
  vg.grid = grid;
  vg.mapping = mode;
  vg.t = frame.t;
  vg.counts = Eigen::VectorXi::Zero(grid.num_cells());
  vg.values = VecX::Zero(grid.num_cells());

  VecX depth_sum = (mode == VoxelMapping::adm) ? VecX::Zero(grid.num_cells()) : VecX();
  for (const Vec3& p : frame.points) {
    Vec3i c = grid.cell_of(p);
    if (!grid.in_bounds(c)) {
      ++vg.discarded;
      continue;
    }
    long i = grid.linear(c);
    vg.counts[i] += 1;
    if (mode == VoxelMapping::adm) depth_sum[i] += p.y();
  }

  const int max_count = vg.counts.size() > 0 ? vg.counts.maxCoeff() : 0;
  for (long i = 0; i < vg.counts.size(); ++i) {
    const int n = vg.counts[i];
    if (n == 0) continue;  // empty cells stay 0 in every mode
    switch (mode) {
      case VoxelMapping::average:
        vg.values[i] = static_cast<double>(n) / max_count;
        break;
      case VoxelMapping::adm:
        vg.values[i] = depth_sum[i] / n;
        break;
      case VoxelMapping::axor: {
        Vec3i c = grid.unlinear(i);
        const bool odd = (n % 2 != 0);
        vg.values[i] = (odd != majority_parity_odd(vg.counts, grid, c))
                           ? 1.0
                           : static_cast<double>(n) / max_count;
        break;
      }
    }
  }
  return vg;
}

std::vector<VoxelGrid> trim_frames(const std::vector<VoxelGrid>& seq, int min_cluster_size,
                                   const std::function<int(const VoxelGrid&)>& largest_cluster_cells) {
  std::vector<VoxelGrid> out;
  for (const VoxelGrid& vg : seq)
    if (largest_cluster_cells(vg) >= min_cluster_size) out.push_back(vg);
  return out;
}

double grid_resolution_preset(const std::string& name) {
  if (name == "default") return 0.10;
  if (name == "lidar") return 0.3;
  if (name == "mmwave") return 0.5;
  throw ConfigError("unknown resolution preset: " + name);
}

GridSpec bounding_grid(const std::vector<Frame>& frames, double cell_size, double margin) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
  Vec3 hi = Vec3::Constant(std::numeric_limits<double>::lowest());
  bool any = false;
  for (const Frame& f : frames)
    for (const Vec3& p : f.points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
      any = true;
    }
  if (!any) {
    lo.setZero();
    hi.setOnes();
  }
  GridSpec g;
  g.origin = lo - Vec3::Constant(margin);
  g.cell_size = Vec3::Constant(cell_size);
  Vec3 span = hi - lo + Vec3::Constant(2.0 * margin);
  for (int k = 0; k < 3; ++k)
    g.dims[k] = std::max(1, static_cast<int>(std::ceil(span[k] / cell_size)));
  return g;
}

}  // namespace palmar
