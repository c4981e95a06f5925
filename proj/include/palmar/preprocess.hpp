#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "palmar/types.hpp"

namespace palmar {

/// Converts a spherical-form frame (r, azimuth, elevation) to Cartesian:
///   x = r cos(el) sin(az),  y = r cos(el) cos(az),  z = r sin(el).
/// Preserves the per-point norm exactly (|result| == r). Throws
/// ValidationError on negative range.
Frame spherical_to_cartesian(const Frame& frame);

/// Per-cell occupancy frequency over a calibration window of static frames.
struct BackgroundModel {
  GridSpec grid;
  VecX frequency;  // in [0,1], one entry per cell

  double at(const Vec3i& c) const { return frequency[grid.linear(c)]; }
};

/// Cell frequency = fraction of calibration frames in which the cell held at
/// least one point. Frames must be Cartesian and non-empty as a list.
BackgroundModel build_background(const std::vector<Frame>& frames, const GridSpec& grid);

struct RangeClamp {
  double min_range = 0.2;   // meters, points closer to the origin are dropped
  double max_range = 20.0;  // meters
};

/// Removes points in cells whose background frequency >= threshold, plus
/// points outside the [min,max] range clamp. Points outside the model grid
/// are kept (no background evidence for them).
Frame subtract_background(const Frame& frame, const BackgroundModel& model,
                          double threshold = 0.8, const RangeClamp& clamp = {});

enum class VoxelMapping { average, adm, axor };

VoxelMapping voxel_mapping_from_string(const std::string& s);
std::string to_string(VoxelMapping m);

/// Dense per-cell scalar grid. Empty cells are 0 in every mapping mode.
///   average: occupancy normalized by the max per-cell count (in [0,1]).
///   adm:     mean depth (y) of the points in the cell.
///   axor:    parity contrast - 1.0 where the cell's point-count parity
///            differs from the majority parity of its 6-neighborhood,
///            otherwise the normalized occupancy.
struct VoxelGrid {
  GridSpec grid;
  VoxelMapping mapping = VoxelMapping::average;
  VecX values;
  Eigen::VectorXi counts;        // raw point count per cell
  std::int64_t discarded = 0;    // points outside the grid bounds
  double t = 0.0;                // source frame timestamp

  int occupied_cells() const { return static_cast<int>((counts.array() > 0).count()); }

  /// Cartesian centers of occupied cells, in linear-index order.
  std::vector<Vec3> occupied_centers() const;
  std::vector<long> occupied_indices() const;
};

VoxelGrid voxelize(const Frame& frame, const GridSpec& grid,
                   VoxelMapping mode = VoxelMapping::average);

/// Keeps only frames whose largest cluster (as reported by the supplied
/// predicate) has at least min_cluster_size occupied cells.
std::vector<VoxelGrid> trim_frames(const std::vector<VoxelGrid>& seq, int min_cluster_size,
                                   const std::function<int(const VoxelGrid&)>& largest_cluster_cells);

/// Named voxel resolution presets (meters per cell edge).
double grid_resolution_preset(const std::string& name);

/// Smallest grid that covers all points of all frames with the given margin.
GridSpec bounding_grid(const std::vector<Frame>& frames, double cell_size, double margin = 0.5);

}  // namespace palmar
