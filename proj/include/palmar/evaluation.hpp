#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "palmar/tracking.hpp"
#include "palmar/types.hpp"

namespace palmar {

struct EvalParams {
  // Per-frame matching gate (meters); unmatched beyond it counts as a miss.
  double match_gate = std::numeric_limits<double>::infinity();
  // Per-frame cost charged in the identity assignment when the track is
  // absent while the person is present.
  double miss_penalty = 2.0;
};

/// Tracking quality against ground truth. The primary ED is identity-level:
/// each ground-truth person is bound to one predicted track for the whole
/// sequence (minimum total cost one-to-one assignment), so identity mistakes
/// surface as distance. frame_ed is the per-frame re-matched localization
/// error; identity switches and identity accuracy come from the per-frame
/// matching against the sequence-level binding.
struct TrackingReport {
  std::string scenario;
  std::string config;
  std::uint64_t seed = 0;
  double mean_ed = 0.0;
  double min_ed = 0.0;
  double max_ed = 0.0;
  double frame_ed = 0.0;
  int identity_switches = 0;
  int misses = 0;
  double identity_accuracy = 1.0;
  int gt_person_frames = 0;
  double reduction_percent = 0.0;  // voxel data reduction achieved upstream
};

TrackingReport euclidean_error(const TrackSet& tracks, const GroundTruth& truth,
                               const EvalParams& params = {});

/// Constant-velocity Kalman filter per track with per-frame Hungarian
/// association on predicted positions (the classic PCD tracking baseline).
struct KalmanParams {
  double process_noise = 1.0;      // acceleration spectral density
  double measurement_noise = 0.1;  // meters
  double assign_gate = 2.0;
  int max_misses = 20;
  int min_observed_frames = 2;
};

TrackSet kalman_baseline(const std::vector<std::vector<Observation2D>>& observation_frames,
                         const std::vector<double>& frame_times, const KalmanParams& params = {});

enum class TrackerVariant { tracker1, no_birch, no_aohmm, no_cpda, full };

std::string to_string(TrackerVariant v);
TrackerVariant tracker_variant_from_string(const std::string& s);

struct RecognitionReport {
  double accuracy = 0.0;
  VecX precision;               // per class
  VecX recall;
  Eigen::MatrixXi confusion;    // rows = truth, cols = prediction
};

RecognitionReport recognition_report(const std::vector<int>& predictions,
                                     const std::vector<int>& labels, int n_classes);

/// Mean per-frame matched distance for each frame (0 when nothing matched);
/// feeds the ED-per-frame plots.
std::vector<double> per_frame_ed(const TrackSet& tracks, const GroundTruth& truth,
                                 const EvalParams& params = {});

void write_tracking_csv(const std::vector<TrackingReport>& rows, const std::string& path);
void write_recognition_csv(const RecognitionReport& report, const std::string& path);

}  // namespace palmar
