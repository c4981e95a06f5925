#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>

#include "palmar/adaptation.hpp"
#include "palmar/evaluation.hpp"
#include "palmar/frame_io.hpp"
#include "palmar/pipeline.hpp"
#include "palmar/recognizer.hpp"
#include "palmar/simulator.hpp"
#include "palmar/tracking.hpp"

namespace fs = std::filesystem;
using namespace palmar;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Output directory resolution: explicit flag wins, then PALMAR_OUT_DIR.
std::string resolve_out_dir(const std::string& flag_value, bool flag_given) {
  if (flag_given) return flag_value;
  if (const char* env = std::getenv("PALMAR_OUT_DIR")) return env;
  return flag_value;
}

PipelineConfig load_pipeline_config(const std::string& path, std::uint64_t seed_override,
                                    bool seed_given) {
  PipelineConfig cfg;
  if (!path.empty()) cfg = pipeline_config_from_json(slurp(path));
  if (seed_given) cfg.seed = seed_override;
  return cfg;
}

// ---------------------------------------------------------------------------
// SVG line plot
// ---------------------------------------------------------------------------

struct Csv {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

Csv read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open csv: " + path);
  Csv csv;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty csv: " + path);
  std::stringstream header(line);
  std::string cell;
  while (std::getline(header, cell, ',')) csv.columns.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (...) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

void write_line_plot_svg(const std::vector<double>& xs, const std::vector<double>& ys,
                         const std::string& x_label, const std::string& y_label,
                         const std::string& path) {
  if (xs.size() != ys.size() || xs.empty()) throw ConfigError("plot: empty or mismatched series");
  const double width = 800, height = 400, pad = 50;
  double x0 = *std::min_element(xs.begin(), xs.end());
  double x1 = *std::max_element(xs.begin(), xs.end());
  double y0 = *std::min_element(ys.begin(), ys.end());
  double y1 = *std::max_element(ys.begin(), ys.end());
  if (x1 <= x0) x1 = x0 + 1.0;
  if (y1 <= y0) y1 = y0 + 1.0;
  auto px = [&](double x) { return pad + (x - x0) / (x1 - x0) * (width - 2 * pad); };
  auto py = [&](double y) { return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad); };

  std::ofstream out(path);
  if (!out) throw ConfigError("plot: cannot open " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << pad << "\" y1=\"" << height - pad << "\" x2=\"" << width - pad
      << "\" y2=\"" << height - pad << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\""
      << height - pad << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">"
      << x_label << "</text>\n";
  out << "<text x=\"14\" y=\"" << height / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << height / 2 << ")\">" << y_label
      << "</text>\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g / %.4g", y0, y1);
  out << "<text x=\"" << pad << "\" y=\"" << pad - 8 << "\" font-size=\"11\">range " << buf
      << "</text>\n";
  out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (std::isnan(ys[i])) continue;
    out << px(xs[i]) << "," << py(ys[i]) << " ";
  }
  out << "\"/>\n</svg>\n";
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& preset, const std::string& config_path, std::uint64_t seed,
                 bool seed_given, const std::string& out_dir, int bg_frames) {
  ScenarioConfig cfg;
  if (!config_path.empty()) {
    cfg = scenario_from_json(slurp(config_path));
  } else {
    auto found = find_scenario(preset);
    if (!found) throw ConfigError("unknown preset: " + preset);
    cfg = *found;
  }
  if (seed_given) cfg.seed = seed;

  fs::create_directories(out_dir);
  ScenarioOutput out = generate(cfg);
  write_frames(out.frames, out_dir + "/frames.jsonl");
  write_ground_truth(out.truth, out_dir + "/truth.jsonl");
  {
    std::ofstream ev(out_dir + "/events.json");
    ev << events_to_json(out.events) << '\n';
  }
  {
    std::ofstream sc(out_dir + "/scenario.json");
    sc << scenario_to_json(cfg) << '\n';
  }
  ScenarioOutput bg = generate_background(cfg, bg_frames);
  write_frames(bg.frames, out_dir + "/background.jsonl");

  std::cerr << "simulate: " << out.frames.size() << " frames, " << cfg.walkers.size()
            << " walkers, " << out.events.size() << " crossover events -> " << out_dir << "\n";
  return kExitOk;
}

int cmd_track(const std::string& frames_path, const std::string& truth_path,
              const std::string& background_path, const std::string& config_path,
              const std::string& variant_name, const std::vector<std::string>& disable,
              std::uint64_t seed, bool seed_given, const std::string& out_dir) {
  PipelineConfig cfg = load_pipeline_config(config_path, seed, seed_given);

  TrackerVariant variant = tracker_variant_from_string(variant_name);
  for (const std::string& d : disable) {
    if (d == "cpda") cfg.tracker.use_cpda = false;
    else if (d == "aohmm") cfg.tracker.use_aohmm = false;
    else if (d == "birch") cfg.cluster.birch_refine = false;
    else throw ConfigError("unknown --disable value: " + d);
  }

  std::vector<Frame> frames = read_frames(frames_path);
  fs::create_directories(out_dir);

  if (frames.empty()) {
    std::cerr << "track: warning: empty frame file, writing empty tracks\n";
    std::ofstream(out_dir + "/tracks.jsonl");
    return kExitOk;
  }

  std::optional<BackgroundModel> bg;
  if (!background_path.empty()) {
    std::vector<Frame> bg_frames = read_frames(background_path);
    if (!bg_frames.empty())
      bg = build_background(bg_frames, bounding_grid(bg_frames, cfg.cell_size));
  }

  auto t_start = std::chrono::steady_clock::now();
  TrackingRun run = run_tracking(frames, cfg, variant, bg);
  auto t_end = std::chrono::steady_clock::now();
  const double secs = std::chrono::duration<double>(t_end - t_start).count();

  // Honor explicit --disable flags in the emitted config label.
  std::string config_label = to_string(variant);
  if (!cfg.tracker.use_cpda && variant == TrackerVariant::full) config_label = "no-cpda";
  if (!cfg.tracker.use_aohmm && variant == TrackerVariant::full) config_label = "no-aohmm";
  if (!cfg.cluster.birch_refine && variant == TrackerVariant::full && cfg.tracker.use_cpda &&
      cfg.tracker.use_aohmm)
    config_label = "no-birch";

  write_tracks(run.tracks, run.space, out_dir + "/tracks.jsonl");

  if (!truth_path.empty()) {
    GroundTruth truth = read_ground_truth(truth_path);
    TrackingReport rep = euclidean_error(run.tracks, truth, cfg.eval);
    rep.scenario = fs::path(frames_path).stem().string();
    rep.config = config_label;
    rep.seed = cfg.seed;
    if (run.total_points > 0)
      rep.reduction_percent =
          100.0 * (1.0 - static_cast<double>(run.occupied_cells) / run.total_points);
    write_tracking_csv({rep}, out_dir + "/report.csv");

    std::vector<double> series = per_frame_ed(run.tracks, truth, cfg.eval);
    std::ofstream fe(out_dir + "/frame_ed.csv");
    fe << "frame,t,ed\n";
    char buf[128];
    for (std::size_t f = 0; f < series.size(); ++f) {
      std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f\n", f,
                    f < run.tracks.frame_times.size() ? run.tracks.frame_times[f] : 0.0,
                    series[f]);
      fe << buf;
    }
  }

  std::cerr << "track: " << frames.size() << " frames, " << run.tracks.tracks.size()
            << " tracks, " << (secs > 0 ? frames.size() / secs : 0.0) << " frames/s ("
            << config_label << ")\n";
  return kExitOk;
}

int cmd_train(const std::string& frames_path, const std::string& truth_path,
              const std::string& classes_csv, std::uint64_t seed, bool seed_given, int epochs,
              const std::string& out_dir) {
  std::vector<Frame> frames = read_frames(frames_path);
  GroundTruth truth = read_ground_truth(truth_path);

  std::vector<std::string> classes;
  {
    std::stringstream ss(classes_csv);
    std::string c;
    while (std::getline(ss, c, ',')) classes.push_back(c);
  }
  if (classes.size() < 2) throw ConfigError("train: need at least two class names");

  SampleBuildConfig build_cfg;
  std::vector<Sample> samples = build_activity_samples(frames, truth, classes, build_cfg);
  if (samples.empty()) throw ValidationError("train: no usable windows in the input");

  RecognizerConfig cfg;
  cfg.classes = static_cast<int>(classes.size());
  cfg.class_names = classes;
  if (seed_given) cfg.seed = seed;
  if (epochs > 0) cfg.epochs = epochs;

  TrainResult result = train(samples, cfg);

  fs::create_directories(out_dir);
  save_recognizer(result.params, out_dir + "/model.json");
  std::ofstream loss(out_dir + "/loss.csv");
  loss << "epoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.8f\n", e, result.loss_history[e]);
    loss << buf;
  }
  std::cerr << "train: " << samples.size() << " samples, final loss "
            << result.loss_history.back() << "\n";
  return kExitOk;
}

int cmd_adapt(const std::string& spec_path, const std::string& out_dir) {
  BenchmarkSpec spec = benchmark_spec_from_json(slurp(spec_path));
  fs::create_directories(out_dir);
  std::vector<BenchmarkRun> runs;
  for (std::uint64_t seed : spec.seeds) {
    runs.push_back(run_domain_benchmark(spec, seed));
    std::cerr << "adapt: seed " << seed << " source-only "
              << runs.back().source_only_accuracy << " adapted " << runs.back().adapted_accuracy
              << "\n";
  }
  write_benchmark_csv(runs, out_dir + "/adapt_results.csv");
  return kExitOk;
}

int cmd_eval(const std::vector<std::string>& presets, const std::vector<std::string>& variants,
             int n_seeds, const std::string& config_path, const std::string& out_dir) {
  PipelineConfig cfg = load_pipeline_config(config_path, 0, false);
  std::vector<TrackerVariant> vs;
  for (const std::string& v : variants) vs.push_back(tracker_variant_from_string(v));
  std::vector<std::uint64_t> seeds;
  for (int s = 1; s <= n_seeds; ++s) seeds.push_back(static_cast<std::uint64_t>(s));

  std::vector<TrackingReport> rows = run_ablation(presets, vs, seeds, cfg);
  fs::create_directories(out_dir);
  write_tracking_csv(rows, out_dir + "/ablation.csv");
  std::cerr << "eval: " << rows.size() << " rows -> " << out_dir << "/ablation.csv\n";
  return kExitOk;
}

int cmd_plot(const std::string& csv_path, const std::string& x_col, const std::string& y_col,
             const std::string& out_path) {
  Csv csv = read_numeric_csv(csv_path);
  auto col_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < csv.columns.size(); ++i)
      if (csv.columns[i] == name) return static_cast<long>(i);
    throw ConfigError("plot: no column named " + name);
  };
  long xi = col_index(x_col), yi = col_index(y_col);
  std::vector<double> xs, ys;
  for (const auto& row : csv.rows) {
    if (static_cast<long>(row.size()) <= std::max(xi, yi)) continue;
    xs.push_back(row[static_cast<std::size_t>(xi)]);
    ys.push_back(row[static_cast<std::size_t>(yi)]);
  }
  write_line_plot_svg(xs, ys, x_col, y_col, out_path);
  std::cerr << "plot: " << xs.size() << " points -> " << out_path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"palmar: point-cloud multi-person tracking and activity recognition"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic scenario");
  std::string sim_preset = "single", sim_config, sim_out = "out";
  std::uint64_t sim_seed = 0;
  int sim_bg_frames = 50;
  sim->add_option("--preset", sim_preset, "scenario preset name");
  sim->add_option("--config", sim_config, "scenario config JSON file");
  auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "override scenario seed");
  auto* sim_out_opt = sim->add_option("--out", sim_out, "output directory");
  sim->add_option("--bg-frames", sim_bg_frames, "calibration frames in background.jsonl");

  // track
  auto* trk = app.add_subcommand("track", "run the tracking pipeline on a frame file");
  std::string trk_frames, trk_truth, trk_bg, trk_config, trk_variant = "full", trk_out = "out";
  std::vector<std::string> trk_disable;
  std::uint64_t trk_seed = 0;
  trk->add_option("--frames", trk_frames, "input frames JSONL")->required();
  trk->add_option("--truth", trk_truth, "ground-truth JSONL (enables the report)");
  trk->add_option("--background", trk_bg, "background calibration frames JSONL");
  trk->add_option("--config", trk_config, "pipeline config JSON");
  trk->add_option("--variant", trk_variant, "tracker1|no-birch|no-aohmm|no-cpda|full");
  trk->add_option("--disable", trk_disable, "disable a stage: cpda, aohmm, birch");
  auto* trk_seed_opt = trk->add_option("--seed", trk_seed, "override pipeline seed");
  auto* trk_out_opt = trk->add_option("--out", trk_out, "output directory");

  // train
  auto* trn = app.add_subcommand("train", "train the activity recognizer");
  std::string trn_frames, trn_truth, trn_classes = "walking,normal_standing", trn_out = "out";
  std::uint64_t trn_seed = 0;
  int trn_epochs = 0;
  trn->add_option("--frames", trn_frames, "input frames JSONL")->required();
  trn->add_option("--truth", trn_truth, "ground-truth JSONL with activity labels")->required();
  trn->add_option("--classes", trn_classes, "comma-separated class names");
  auto* trn_seed_opt = trn->add_option("--seed", trn_seed, "training seed");
  trn->add_option("--epochs", trn_epochs, "override epoch count");
  auto* trn_out_opt = trn->add_option("--out", trn_out, "output directory");

  // adapt
  auto* adp = app.add_subcommand("adapt", "run the domain-adaptation benchmark");
  std::string adp_spec, adp_out = "out";
  adp->add_option("--spec", adp_spec, "benchmark spec JSON")->required();
  auto* adp_out_opt = adp->add_option("--out", adp_out, "output directory");

  // eval
  auto* evl = app.add_subcommand("eval", "scenario x variant ablation grid");
  std::vector<std::string> evl_presets = {"single", "two", "three", "crossover", "outdoor"};
  std::vector<std::string> evl_variants = {"tracker1", "no-birch", "no-aohmm", "no-cpda", "full"};
  int evl_seeds = 1;
  std::string evl_config, evl_out = "out";
  evl->add_option("--presets", evl_presets, "scenario presets");
  evl->add_option("--variants", evl_variants, "tracker variants");
  evl->add_option("--seeds", evl_seeds, "number of seeds (1..N)");
  evl->add_option("--config", evl_config, "pipeline config JSON");
  auto* evl_out_opt = evl->add_option("--out", evl_out, "output directory");

  // plot
  auto* plt = app.add_subcommand("plot", "SVG line plot from a CSV column pair");
  std::string plt_csv, plt_x = "frame", plt_y = "ed", plt_out = "plot.svg";
  plt->add_option("--csv", plt_csv, "input CSV")->required();
  plt->add_option("--x", plt_x, "x column name");
  plt->add_option("--y", plt_y, "y column name");
  plt->add_option("--out", plt_out, "output SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (sim->parsed())
      return cmd_simulate(sim_preset, sim_config, sim_seed, sim_seed_opt->count() > 0,
                          resolve_out_dir(sim_out, sim_out_opt->count() > 0), sim_bg_frames);
    if (trk->parsed())
      return cmd_track(trk_frames, trk_truth, trk_bg, trk_config, trk_variant, trk_disable,
                       trk_seed, trk_seed_opt->count() > 0,
                       resolve_out_dir(trk_out, trk_out_opt->count() > 0));
    if (trn->parsed())
      return cmd_train(trn_frames, trn_truth, trn_classes, trn_seed, trn_seed_opt->count() > 0,
                       trn_epochs, resolve_out_dir(trn_out, trn_out_opt->count() > 0));
    if (adp->parsed())
      return cmd_adapt(adp_spec, resolve_out_dir(adp_out, adp_out_opt->count() > 0));
    if (evl->parsed())
      return cmd_eval(evl_presets, evl_variants, evl_seeds, evl_config,
                      resolve_out_dir(evl_out, evl_out_opt->count() > 0));
    if (plt->parsed()) return cmd_plot(plt_csv, plt_x, plt_y, plt_out);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
