#include "palmar/pipeline.hpp"

#include <json.hpp>

namespace palmar {

using nlohmann::json;

std::string pipeline_config_to_json(const PipelineConfig& c) {
  json j{{"cell_size", c.cell_size},
         {"mapping", to_string(c.mapping)},
         {"bg_threshold", c.bg_threshold},
         {"clamp", {{"min_range", c.clamp.min_range}, {"max_range", c.clamp.max_range}}},
         {"cluster",
          {{"eps_cells", c.cluster.eps_cells},
           {"min_pts", c.cluster.min_pts},
           {"alpha", c.cluster.alpha},
           {"min_cells", c.cluster.min_cells},
           {"max_cells", c.cluster.max_cells},
           {"birch_threshold", c.cluster.birch_threshold},
           {"birch_branching", c.cluster.birch_branching}}},
         {"tracker",
          {{"window", c.tracker.hmm.window},
           {"cpda_windows", c.tracker.hmm.cpda_windows},
           {"emission_sigma", c.tracker.hmm.emission_sigma},
           {"overlap_radius", c.tracker.hmm.overlap_radius},
           {"persistence", c.tracker.hmm.persistence},
           {"p_self", c.tracker.hmm.p_self},
           {"p_hop1", c.tracker.hmm.p_hop1},
           {"p_hop2", c.tracker.hmm.p_hop2},
           {"assign_gate", c.tracker.assign_gate},
           {"crossover_radius", c.tracker.crossover_radius},
           {"max_misses", c.tracker.max_misses},
           {"min_observed_frames", c.tracker.min_observed_frames}}},
         {"state_cell", c.state_cell},
         {"kalman",
          {{"process_noise", c.kalman.process_noise},
           {"measurement_noise", c.kalman.measurement_noise},
           {"assign_gate", c.kalman.assign_gate},
           {"max_misses", c.kalman.max_misses}}},
         {"eval", {{"miss_penalty", c.eval.miss_penalty}}},
         {"seed", c.seed}};
  return j.dump(2);
}

PipelineConfig pipeline_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("pipeline config: ") + e.what());
  }
  PipelineConfig c;
  try {
    c.cell_size = j.value("cell_size", c.cell_size);
    if (j.contains("resolution_preset"))
      c.cell_size = grid_resolution_preset(j["resolution_preset"].get<std::string>());
    if (j.contains("mapping")) c.mapping = voxel_mapping_from_string(j["mapping"].get<std::string>());
    c.bg_threshold = j.value("bg_threshold", c.bg_threshold);
    if (j.contains("clamp")) {
      c.clamp.min_range = j["clamp"].value("min_range", c.clamp.min_range);
      c.clamp.max_range = j["clamp"].value("max_range", c.clamp.max_range);
    }
    if (j.contains("cluster")) {
      const auto& cj = j["cluster"];
      c.cluster.eps_cells = cj.value("eps_cells", c.cluster.eps_cells);
      c.cluster.min_pts = cj.value("min_pts", c.cluster.min_pts);
      c.cluster.alpha = cj.value("alpha", c.cluster.alpha);
      c.cluster.min_cells = cj.value("min_cells", c.cluster.min_cells);
      c.cluster.max_cells = cj.value("max_cells", c.cluster.max_cells);
      c.cluster.birch_threshold = cj.value("birch_threshold", c.cluster.birch_threshold);
      c.cluster.birch_branching = cj.value("birch_branching", c.cluster.birch_branching);
    }
    if (j.contains("tracker")) {
      const auto& tj = j["tracker"];
      c.tracker.hmm.window = tj.value("window", c.tracker.hmm.window);
      c.tracker.hmm.cpda_windows = tj.value("cpda_windows", c.tracker.hmm.cpda_windows);
      c.tracker.hmm.emission_sigma = tj.value("emission_sigma", c.tracker.hmm.emission_sigma);
      c.tracker.hmm.overlap_radius = tj.value("overlap_radius", c.tracker.hmm.overlap_radius);
      c.tracker.hmm.persistence = tj.value("persistence", c.tracker.hmm.persistence);
      c.tracker.hmm.p_self = tj.value("p_self", c.tracker.hmm.p_self);
      c.tracker.hmm.p_hop1 = tj.value("p_hop1", c.tracker.hmm.p_hop1);
      c.tracker.hmm.p_hop2 = tj.value("p_hop2", c.tracker.hmm.p_hop2);
      c.tracker.assign_gate = tj.value("assign_gate", c.tracker.assign_gate);
      c.tracker.crossover_radius = tj.value("crossover_radius", c.tracker.crossover_radius);
      c.tracker.max_misses = tj.value("max_misses", c.tracker.max_misses);
      c.tracker.min_observed_frames = tj.value("min_observed_frames", c.tracker.min_observed_frames);
    }
    c.state_cell = j.value("state_cell", c.state_cell);
    if (j.contains("kalman")) {
      const auto& kj = j["kalman"];
      c.kalman.process_noise = kj.value("process_noise", c.kalman.process_noise);
      c.kalman.measurement_noise = kj.value("measurement_noise", c.kalman.measurement_noise);
      c.kalman.assign_gate = kj.value("assign_gate", c.kalman.assign_gate);
      c.kalman.max_misses = kj.value("max_misses", c.kalman.max_misses);
    }
    if (j.contains("eval")) c.eval.miss_penalty = j["eval"].value("miss_penalty", c.eval.miss_penalty);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ParseError(std::string("pipeline config: ") + e.what());
  }
  return c;
}

TrackingRun run_tracking(const std::vector<Frame>& frames, const PipelineConfig& config,
                         TrackerVariant variant, const std::optional<BackgroundModel>& background) {
  TrackingRun run;

  std::vector<Frame> cleaned;
  cleaned.reserve(frames.size());
  for (const Frame& f : frames)
    cleaned.push_back(background ? subtract_background(f, *background, config.bg_threshold,
                                                       config.clamp)
                                 : f);

  GridSpec grid = bounding_grid(cleaned, config.cell_size);
  Vec2 lo = grid.origin.head<2>();
  Vec2 hi = lo + Vec2(grid.dims.x() * grid.cell_size.x(), grid.dims.y() * grid.cell_size.y());
  run.space = StateSpace2D::over_bounds(lo, hi, config.state_cell);

  PersonClusterConfig cluster_cfg = config.cluster;
  if (variant == TrackerVariant::no_birch || variant == TrackerVariant::tracker1)
    cluster_cfg.birch_refine = false;

  std::vector<std::vector<Observation2D>> observations;
  std::vector<double> times;
  observations.reserve(cleaned.size());
  for (const Frame& f : cleaned) {
    VoxelGrid vg = voxelize(f, grid, config.mapping);
    run.total_points += static_cast<long>(f.points.size());
    run.occupied_cells += vg.occupied_cells();
    ClusterSet cs = estimate_person_clusters(vg, cluster_cfg);
    run.clusters_per_frame.push_back(static_cast<int>(cs.clusters.size()));
    observations.push_back(project_to_2d(cs));
    times.push_back(f.t);
  }

  if (variant == TrackerVariant::tracker1) {
    run.tracks = kalman_baseline(observations, times, config.kalman);
    for (Track& tr : run.tracks.tracks)
      for (TrackPoint& tp : tr.points) tp.state = run.space.nearest_state(tp.pos);
    return run;
  }

  TrackerConfig tracker_cfg = config.tracker;
  tracker_cfg.use_aohmm = variant != TrackerVariant::no_aohmm;
  tracker_cfg.use_cpda = variant != TrackerVariant::no_cpda;

  OnlineTracker tracker(run.space, tracker_cfg);
  for (std::size_t f = 0; f < observations.size(); ++f)
    tracker.push(times[f], observations[f]);
  run.tracks = tracker.finish();
  return run;
}

std::vector<TrackingReport> run_ablation(const std::vector<std::string>& scenario_names,
                                         const std::vector<TrackerVariant>& variants,
                                         const std::vector<std::uint64_t>& seeds,
                                         const PipelineConfig& base_config) {
  std::vector<TrackingReport> rows;
  for (const std::string& name : scenario_names) {
    std::optional<ScenarioConfig> scenario = find_scenario(name);
    if (!scenario) throw ConfigError("unknown scenario preset: " + name);
    for (std::uint64_t seed : seeds) {
      ScenarioConfig sc = *scenario;
      sc.seed = seed;
      ScenarioOutput out = generate(sc);
      for (TrackerVariant variant : variants) {
        TrackingRun run = run_tracking(out.frames, base_config, variant);
        TrackingReport rep = euclidean_error(run.tracks, out.truth, base_config.eval);
        rep.scenario = name;
        rep.config = to_string(variant);
        rep.seed = seed;
        if (run.total_points > 0)
          rep.reduction_percent =
              100.0 * (1.0 - static_cast<double>(run.occupied_cells) / run.total_points);
        rows.push_back(std::move(rep));
      }
    }
  }
  return rows;
}

}  // namespace palmar
