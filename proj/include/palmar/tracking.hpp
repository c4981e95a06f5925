#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "palmar/clustering.hpp"
#include "palmar/preprocess.hpp"
#include "palmar/types.hpp"

namespace palmar {

/// 2D tracking lattice (the voxel grid with z removed, usually coarser).
struct StateSpace2D {
  Vec2 origin = Vec2::Zero();
  double cell = 0.5;
  Vec2i dims = Vec2i::Ones();

  static StateSpace2D over_bounds(const Vec2& lo, const Vec2& hi, double cell, double margin = 1.0);

  int num_states() const { return dims.x() * dims.y(); }
  bool in_bounds(const Vec2i& c) const {
    return (c.array() >= 0).all() && (c.array() < dims.array()).all();
  }
  Vec2i cell_coords(int s) const { return Vec2i(s % dims.x(), s / dims.x()); }
  int state_of(const Vec2i& c) const { return c.y() * dims.x() + c.x(); }
  Vec2i cell_of(const Vec2& p) const {
    Vec2 rel = (p - origin) / cell;
    return Vec2i(static_cast<int>(std::floor(rel.x())), static_cast<int>(std::floor(rel.y())));
  }
  bool contains(const Vec2& p) const { return in_bounds(cell_of(p)); }
  int nearest_state(const Vec2& p) const;  // clamped to the lattice
  Vec2 center(int s) const {
    Vec2i c = cell_coords(s);
    return origin + Vec2(c.x() + 0.5, c.y() + 0.5) * cell;
  }
  /// Chebyshev distance between two states' cells.
  int hop_distance(int a, int b) const {
    Vec2i d = cell_coords(a) - cell_coords(b);
    return std::max(std::abs(d.x()), std::abs(d.y()));
  }
  /// All states with Chebyshev distance <= hops (the (2h+1)^2 block,
  /// clipped at the lattice edge), including s itself. Sorted.
  std::vector<int> block(int s, int hops) const;
};

/// Expands the active set by the 1-hop (non-overlap) or 2-hop (overlap)
/// neighborhood of every active cell. Result is sorted and unique.
std::vector<int> active_states(const std::vector<int>& prev_active, const StateSpace2D& space,
                               bool overlap);

struct HmmParams {
  double emission_sigma = 0.5;  // meters
  double p_self = 0.5;          // transition mass on staying put
  double p_hop1 = 0.4;          // mass shared by the 1-hop ring
  double p_hop2 = 0.1;          // mass shared by the 2-hop ring
  double persistence = 3.0;     // second-order direction-continuation factor
  double overlap_radius = 1.5;  // meters; two observations closer than this
                                // switch the step to second order
  int window = 10;              // W frames per decode window
  int cpda_windows = 3;         // C
};

/// Dynamic-programming lattice: per-step active state lists with explicit
/// log-probability tables. Grid decodes and synthetic test models share this
/// form.
struct Trellis {
  std::vector<std::vector<int>> active;  // global state ids per step, sorted
  VecX prior_log;                        // over active[0]
  std::vector<VecX> emission_log;        // [t] over active[t]
  std::vector<MatX> trans_log;           // [t]: |active[t-1]| x |active[t]|, t >= 1
  // Additive second-order log factor on (s_{t-2}, s_{t-1}, s_t); the decoder
  // renormalizes each (a,b) row over the step's active set when the step is
  // flagged second order. Null means identically zero.
  std::function<double(int a, int b, int c)> momentum_log;
  std::vector<std::uint8_t> second_order;  // per step; only t >= 2 can apply

  int steps() const { return static_cast<int>(active.size()); }
};

/// Maximum-likelihood state path over a trellis.
struct DecodedPath {
  int target_id = -1;
  int window_index = 0;
  int start_frame = 0;                  // global frame of step 0
  std::vector<int> states;              // global state ids
  std::vector<Vec2> positions;          // observation when present, else cell center
  std::vector<std::uint8_t> observed;
  std::vector<double> step_loglik;      // per-step score contribution
  double total_loglik = 0.0;
};

DecodedPath viterbi_first_order(const Trellis& trellis);
/// Pair-state decode; steps flagged in trellis.second_order apply the
/// momentum factor with per-(prev,cur) renormalization. With no flags the
/// result equals the first-order decode.
DecodedPath viterbi_second_order(const Trellis& trellis);

/// Grid trellis for one target over one window. obs holds one optional
/// observation per step (nullopt = coast with uninformative emission);
/// overlap flags select second-order steps. seed_state carries continuity
/// from the previous window. Throws NumericError when an observation falls
/// outside the lattice.
Trellis build_grid_trellis(const StateSpace2D& space, const HmmParams& params,
                           const std::vector<std::optional<Vec2>>& obs,
                           const std::vector<std::uint8_t>& overlap_flags,
                           std::optional<int> seed_state);

/// 2D observations for one frame: cluster centroids with z dropped.
struct Observation2D {
  Vec2 pos = Vec2::Zero();
  int cluster_index = -1;
  int size = 0;
};

std::vector<Observation2D> project_to_2d(const ClusterSet& clusters);

struct WindowDecode {
  int window_index = 0;
  int start_frame = 0;
  std::vector<DecodedPath> paths;
};

struct TrackPoint {
  int frame = 0;
  double t = 0.0;
  int state = -1;
  Vec2 pos = Vec2::Zero();
  bool observed = false;
};

struct Track {
  int id = -1;
  int birth_frame = 0;
  int death_frame = 0;  // last frame with a point
  std::vector<TrackPoint> points;
};

struct TrackSet {
  std::vector<Track> tracks;
  std::vector<double> frame_times;
};

struct TrackerConfig {
  HmmParams hmm;
  double assign_gate = 2.0;      // meters, observation-to-prediction gate
  double crossover_radius = 1.0; // meters, CPDA interaction radius
  int max_misses = 0;            // 0 = 2 * window
  int min_observed_frames = 2;   // shorter tracks are dropped as clutter
  bool use_aohmm = true;  // off: snapped nearest-assignment chaining
  bool use_cpda = true;   // off: stitched output without identity repair
};

/// Streaming multi-target tracker: per-frame one-to-one assignment of
/// observations to targets by nearest predicted position (model-rolled with
/// velocity under AO-HMM, hold-last without), windowed adaptive-order
/// decoding, then CPDA identity repair over the decoded windows.
class OnlineTracker {
 public:
  OnlineTracker(const StateSpace2D& space, const TrackerConfig& config);

  void push(double t, const std::vector<Observation2D>& observations);
  TrackSet finish();

  const std::vector<WindowDecode>& windows() const { return windows_; }
  const StateSpace2D& space() const { return space_; }

 private:
  struct Target {
    int id = -1;
    Vec2 pos = Vec2::Zero();
    Vec2 vel = Vec2::Zero();
    int misses = 0;
    int last_observed_frame = -1;
    std::optional<int> seed_state;
    std::vector<std::optional<Vec2>> window_obs;
    bool alive = true;
  };

  void flush_window(int end_frame);

  StateSpace2D space_;
  TrackerConfig config_;
  std::vector<Target> targets_;
  std::vector<WindowDecode> windows_;
  std::vector<double> times_;
  std::vector<std::uint8_t> overlap_flags_;  // per buffered frame
  int window_start_ = 0;
  int frame_ = 0;
  int next_id_ = 0;
  int window_index_ = 0;
};

/// One decode window per call signature of the underlying pipeline: decodes a
/// whole window of per-frame observation lists in one shot (batch form of the
/// streaming tracker, without CPDA).
std::vector<DecodedPath> aohmm_decode(const std::vector<std::vector<Observation2D>>& window_observations,
                                      const HmmParams& params, const StateSpace2D& space);

struct CpdaParams {
  double crossover_radius = 1.0;
  int window = 10;            // W, frames per window
  int horizon_windows = 3;    // C, lookback bound for grouping and velocities
  int velocity_frames = 5;
};

/// Stitches decoded windows into per-identity tracks without repair.
TrackSet stitch_tracks(const std::vector<WindowDecode>& windows,
                       const std::vector<double>& frame_times);

/// Crossover path disambiguation: stitches the windows, finds interactions
/// (tracks within crossover_radius at the same frame), and at each
/// interaction re-assigns identities across the crossover by minimizing the
/// total velocity-discontinuity cost over identity permutations. Geometry is
/// never altered, only labels.
TrackSet cpda(const std::vector<WindowDecode>& windows, const std::vector<double>& frame_times,
              const CpdaParams& params);

/// Occupied voxels of one frame assigned to the nearest track position
/// within radius (2D); ties go to the lower track id.
struct PersonPoints {
  std::vector<int> track_ids;
  std::vector<std::vector<long>> cells;  // linear voxel indices per track
  std::vector<long> unassigned;
};

PersonPoints extract_person_points(const VoxelGrid& voxels, const TrackSet& tracks,
                                   int frame_index, double radius);

// Track file: JSONL, one line per frame:
//   {"t": <s>, "tracks": [{"id": <int>, "cell": [i,j], "pos": [x,y]}]}
void write_tracks(const TrackSet& tracks, const StateSpace2D& space, const std::string& path);

}  // namespace palmar
