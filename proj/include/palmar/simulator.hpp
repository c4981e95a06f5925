#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "palmar/types.hpp"

namespace palmar {

/// Ellipsoidal point scatter standing on the ground plane. The surface
/// pattern is sampled once per walker in antipodal pairs, so the pre-noise
/// centroid equals the body center exactly.
struct BodyModel {
  Vec3 axes = Vec3(0.4, 0.3, 1.7);  // full extents, meters
  int points_per_frame = 300;       // rounded down to an even count
  double head_height = 1.6;         // head z above ground
};

struct ActivityPhase {
  double start = 0.0;  // seconds after the walker's entry
  std::string activity = "walking";
};

struct WalkerConfig {
  std::vector<Vec2> waypoints;  // ground-plane path, walked at constant speed
  double speed = 1.0;           // m/s
  double entry_delay = 0.0;     // seconds before the walker appears
  double linger = 0.0;          // seconds spent at the path end before exiting
  std::vector<ActivityPhase> schedule = {{0.0, "walking"}};
};

struct BoxObstacle {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();
  int points = 200;  // static points scattered inside the box
};

struct ScenarioConfig {
  std::string name = "custom";
  Vec2 bounds_min = Vec2(0.0, 0.0);
  Vec2 bounds_max = Vec2(8.0, 6.0);
  std::vector<WalkerConfig> walkers;
  BodyModel body;
  double noise_sigma = 0.02;      // per-point Gaussian, meters
  double dropout = 0.0;           // per-walker-point removal probability
  std::vector<BoxObstacle> objects;
  double frame_rate = 10.0;       // Hz
  double duration = 0.0;          // seconds; 0 = run until the last walker exits
  double crossover_threshold = 1.0;  // 2D head distance that logs a crossover
  std::uint64_t seed = 1;

  void validate() const;  // throws ValidationError on paths outside bounds
};

struct CrossoverEvent {
  int walker_a = 0;
  int walker_b = 0;
  int first_frame = 0;
  int last_frame = 0;
};

struct ScenarioOutput {
  std::vector<Frame> frames;
  GroundTruth truth;
  std::vector<CrossoverEvent> events;
  // Per frame, per point: owning walker index, or -1 for background points.
  std::vector<std::vector<int>> owners;
};

/// Deterministic synthetic scene: walkers follow their waypoint paths with
/// staggered entries, activities deform the body pattern, background objects
/// emit static points. Noise applies to every point, dropout only to walker
/// points. The logged head centroid is the exact pre-noise point mean plus
/// the head offset.
ScenarioOutput generate(const ScenarioConfig& config);

/// Walker-free variant of the same scene (background calibration frames).
ScenarioOutput generate_background(const ScenarioConfig& config, int n_frames = 50);

/// The five named presets: single, two, three, crossover, outdoor.
std::vector<ScenarioConfig> preset_scenarios();

/// Presets plus the staged test scenes (xcross, bounce).
std::optional<ScenarioConfig> find_scenario(const std::string& name);

std::string scenario_to_json(const ScenarioConfig& config);
ScenarioConfig scenario_from_json(const std::string& text);

std::string events_to_json(const std::vector<CrossoverEvent>& events);

}  // namespace palmar
