#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "palmar/clustering.hpp"
#include "palmar/evaluation.hpp"
#include "palmar/preprocess.hpp"
#include "palmar/simulator.hpp"
#include "palmar/tracking.hpp"
#include "palmar/types.hpp"

namespace palmar {

/// End-to-end configuration: voxelization, clustering, tracking, evaluation.
/// All randomness downstream derives from the single seed.
struct PipelineConfig {
  double cell_size = 0.10;        // voxel edge, meters
  VoxelMapping mapping = VoxelMapping::average;
  double bg_threshold = 0.8;
  RangeClamp clamp;
  PersonClusterConfig cluster;
  TrackerConfig tracker;
  double state_cell = 0.5;        // tracking lattice, meters
  KalmanParams kalman;
  EvalParams eval;
  std::uint64_t seed = 1;
};

std::string pipeline_config_to_json(const PipelineConfig& config);
PipelineConfig pipeline_config_from_json(const std::string& text);

struct TrackingRun {
  TrackSet tracks;
  StateSpace2D space;
  long total_points = 0;      // after background subtraction
  long occupied_cells = 0;    // across all frames
  std::vector<int> clusters_per_frame;
};

/// Full tracking pipeline on Cartesian frames: optional background
/// subtraction, voxelization, person clustering, then the tracker selected
/// by the variant.
TrackingRun run_tracking(const std::vector<Frame>& frames, const PipelineConfig& config,
                         TrackerVariant variant,
                         const std::optional<BackgroundModel>& background = std::nullopt);

/// Scenario x variant x seed grid of tracking reports (Table-style ablation).
std::vector<TrackingReport> run_ablation(const std::vector<std::string>& scenario_names,
                                         const std::vector<TrackerVariant>& variants,
                                         const std::vector<std::uint64_t>& seeds,
                                         const PipelineConfig& base_config);

}  // namespace palmar
