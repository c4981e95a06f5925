#include "palmar/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include <json.hpp>

#include "palmar/rng.hpp"

namespace palmar {

using nlohmann::json;

namespace {

constexpr std::uint64_t kStreamPattern = 10;
constexpr std::uint64_t kStreamNoise = 20;
constexpr std::uint64_t kStreamDropout = 30;
constexpr std::uint64_t kStreamBackground = 40;

double path_length(const std::vector<Vec2>& wp) {
  double len = 0.0;
  for (std::size_t i = 1; i < wp.size(); ++i) len += (wp[i] - wp[i - 1]).norm();
  return len;
}

// Position along the polyline at arc length s (clamped to the ends).
Vec2 path_at(const std::vector<Vec2>& wp, double s) {
  if (wp.size() == 1 || s <= 0.0) return wp.front();
  for (std::size_t i = 1; i < wp.size(); ++i) {
    double seg = (wp[i] - wp[i - 1]).norm();
    if (s <= seg || i + 1 == wp.size()) {
      if (seg <= 0.0) return wp[i];
      double u = std::min(1.0, s / seg);
      return wp[i - 1] + u * (wp[i] - wp[i - 1]);
    }
    s -= seg;
  }
  return wp.back();
}

struct WalkerState {
  std::vector<Vec3> pattern;  // antipodal surface offsets, body frame
  double exit_time = 0.0;
};

const std::string& activity_at(const WalkerConfig& w, double local_t) {
  static const std::string kWalking = "walking";
  const std::string* act = &kWalking;
  for (const ActivityPhase& ph : w.schedule)
    if (local_t >= ph.start) act = &ph.activity;
  return *act;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (frame_rate <= 0.0) throw ValidationError("scenario: frame_rate must be positive");
  if (dropout < 0.0 || dropout > 1.0) throw ValidationError("scenario: dropout must be in [0,1]");
  if (noise_sigma < 0.0) throw ValidationError("scenario: noise_sigma must be >= 0");
  if (!(bounds_max.array() > bounds_min.array()).all())
    throw ValidationError("scenario: bounds_max must exceed bounds_min");
  for (std::size_t i = 0; i < walkers.size(); ++i) {
    const WalkerConfig& w = walkers[i];
    if (w.waypoints.empty())
      throw ValidationError("scenario: walker " + std::to_string(i) + " has no waypoints");
    if (w.speed < 0.0) throw ValidationError("scenario: walker speed must be >= 0");
    if (w.entry_delay < 0.0) throw ValidationError("scenario: entry delay must be >= 0");
    for (const Vec2& p : w.waypoints)
      if ((p.array() < bounds_min.array()).any() || (p.array() > bounds_max.array()).any())
        throw ValidationError("scenario: walker " + std::to_string(i) + " path exits bounds");
  }
}

ScenarioOutput generate(const ScenarioConfig& config) {
  config.validate();

  const double dt = 1.0 / config.frame_rate;
  const Vec3 half = config.body.axes / 2.0;
  const Vec3 head_offset(0.0, 0.0, config.body.head_height - half.z());

  // Fixed per-walker surface patterns in antipodal pairs.
  std::vector<WalkerState> states(config.walkers.size());
  for (std::size_t w = 0; w < config.walkers.size(); ++w) {
    auto rng = make_rng(config.seed, kStreamPattern + w);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int pairs = std::max(1, config.body.points_per_frame / 2);
    states[w].pattern.reserve(2 * static_cast<std::size_t>(pairs));
    for (int k = 0; k < pairs; ++k) {
      Vec3 u(gauss(rng), gauss(rng), gauss(rng));
      double n = u.norm();
      u = (n > 0.0) ? Vec3(u / n) : Vec3(1.0, 0.0, 0.0);
      Vec3 offset = half.cwiseProduct(u);
      states[w].pattern.push_back(offset);
      states[w].pattern.push_back(-offset);
    }
    const WalkerConfig& wc = config.walkers[w];
    const double len = path_length(wc.waypoints);
    const double travel = (wc.speed > 0.0 && len > 0.0)
                              ? len / wc.speed
                              : std::numeric_limits<double>::infinity();
    // A stationary walker (single waypoint or zero speed) stays for good.
    states[w].exit_time = std::isfinite(travel) ? wc.entry_delay + travel + wc.linger
                                                : std::numeric_limits<double>::infinity();
  }

  double duration = config.duration;
  if (duration <= 0.0) {
    for (const WalkerState& s : states)
      if (std::isfinite(s.exit_time)) duration = std::max(duration, s.exit_time);
    duration += 1.0;
  }
  const int n_frames = std::max(1, static_cast<int>(std::llround(duration * config.frame_rate)));

  // Static background points, sampled once.
  std::vector<Vec3> background;
  {
    auto rng = make_rng(config.seed, kStreamBackground);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (const BoxObstacle& box : config.objects)
      for (int k = 0; k < box.points; ++k) {
        Vec3 u(uni(rng), uni(rng), uni(rng));
        background.push_back(box.lo + u.cwiseProduct(box.hi - box.lo));
      }
  }

  auto noise_rng = make_rng(config.seed, kStreamNoise);
  auto drop_rng = make_rng(config.seed, kStreamDropout);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> uni01(0.0, 1.0);

  ScenarioOutput out;
  out.frames.reserve(static_cast<std::size_t>(n_frames));
  out.truth.reserve(static_cast<std::size_t>(n_frames));
  out.owners.reserve(static_cast<std::size_t>(n_frames));

  for (int fi = 0; fi < n_frames; ++fi) {
    const double t = fi * dt;
    Frame frame;
    frame.t = t;
    frame.sensor = Sensor::synthetic;
    TruthFrame tf;
    tf.t = t;
    std::vector<int> owners;

    for (std::size_t w = 0; w < config.walkers.size(); ++w) {
      const WalkerConfig& wc = config.walkers[w];
      const double local_t = t - wc.entry_delay;
      if (local_t < 0.0 || t > states[w].exit_time) continue;

      Vec2 ground = path_at(wc.waypoints, wc.speed * local_t);
      Vec3 center(ground.x(), ground.y(), half.z());
      const std::string& act = activity_at(wc, local_t);

      if (act == "bending") {
        // Vertical centroid dip, 3 s cycle, 0.35 m deep.
        center.z() -= 0.35 * 0.5 * (1.0 - std::cos(2.0 * M_PI * local_t / 3.0));
      }
      double wave = 0.0;
      if (act == "single_wave" || act == "two_wave")
        wave = 0.25 * std::sin(2.0 * M_PI * 1.2 * local_t);

      // Pre-noise points with activity deformation.
      std::vector<Vec3> pts;
      pts.reserve(states[w].pattern.size());
      Vec3 mean = Vec3::Zero();
      for (const Vec3& off : states[w].pattern) {
        Vec3 p = center + off;
        if (wave != 0.0 && off.z() > 0.25 * config.body.axes.z()) {
          if (act == "two_wave")
            p.x() += (off.x() >= 0.0 ? wave : -wave);
          else if (off.x() >= 0.0)
            p.x() += wave;
        }
        pts.push_back(p);
        mean += p;
      }
      mean /= static_cast<double>(pts.size());

      PersonTruth truth;
      truth.id = static_cast<int>(w);
      truth.head = mean + head_offset;
      truth.activity = act;
      tf.persons.push_back(std::move(truth));

      for (const Vec3& p : pts) {
        if (config.dropout > 0.0 && uni01(drop_rng) < config.dropout) continue;
        Vec3 q = p;
        if (config.noise_sigma > 0.0)
          q += config.noise_sigma * Vec3(noise(noise_rng), noise(noise_rng), noise(noise_rng));
        frame.points.push_back(q);
        owners.push_back(static_cast<int>(w));
      }
    }

    for (const Vec3& p : background) {
      Vec3 q = p;
      if (config.noise_sigma > 0.0)
        q += config.noise_sigma * Vec3(noise(noise_rng), noise(noise_rng), noise(noise_rng));
      frame.points.push_back(q);
      owners.push_back(-1);
    }

    out.frames.push_back(std::move(frame));
    out.truth.push_back(std::move(tf));
    out.owners.push_back(std::move(owners));
  }

  // Crossover events: maximal frame intervals where a pair of ground-truth
  // heads stays within the threshold (2D).
  std::map<std::pair<int, int>, int> open;  // pair -> first frame
  for (int fi = 0; fi < n_frames; ++fi) {
    const auto& persons = out.truth[static_cast<std::size_t>(fi)].persons;
    for (std::size_t a = 0; a < persons.size(); ++a)
      for (std::size_t b = a + 1; b < persons.size(); ++b) {
        auto key = std::make_pair(persons[a].id, persons[b].id);
        double d = (persons[a].head.head<2>() - persons[b].head.head<2>()).norm();
        bool close = d < config.crossover_threshold;
        auto it = open.find(key);
        if (close && it == open.end()) {
          open[key] = fi;
        } else if (!close && it != open.end()) {
          out.events.push_back({key.first, key.second, it->second, fi - 1});
          open.erase(it);
        }
      }
    // Pairs that stop coexisting close their interval too.
    for (auto it = open.begin(); it != open.end();) {
      bool both = false;
      int na = 0;
      for (const auto& p : persons) {
        if (p.id == it->first.first || p.id == it->first.second) ++na;
      }
      both = (na == 2);
      if (!both) {
        out.events.push_back({it->first.first, it->first.second, it->second, fi - 1});
        it = open.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (const auto& [key, first] : open)
    out.events.push_back({key.first, key.second, first, n_frames - 1});
  std::sort(out.events.begin(), out.events.end(), [](const CrossoverEvent& x, const CrossoverEvent& y) {
    return std::tie(x.first_frame, x.walker_a, x.walker_b) <
           std::tie(y.first_frame, y.walker_a, y.walker_b);
  });
  return out;
}

ScenarioOutput generate_background(const ScenarioConfig& config, int n_frames) {
  ScenarioConfig bg = config;
  bg.walkers.clear();
  bg.duration = n_frames / bg.frame_rate;
  return generate(bg);
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

namespace {

BoxObstacle wall_box(double x0, double y0, double x1, double y1, double height, int points) {
  BoxObstacle b;
  b.lo = Vec3(x0, y0, 0.0);
  b.hi = Vec3(x1, y1, height);
  b.points = points;
  return b;
}

WalkerConfig walker(std::vector<Vec2> wp, double speed, double delay,
                    std::vector<ActivityPhase> schedule = {{0.0, "walking"}},
                    double linger = 0.0) {
  WalkerConfig w;
  w.waypoints = std::move(wp);
  w.speed = speed;
  w.entry_delay = delay;
  w.linger = linger;
  w.schedule = std::move(schedule);
  return w;
}

// Ping-pong path: shuttle between a and b, `trips` one-way traversals.
std::vector<Vec2> shuttle(Vec2 a, Vec2 b, int trips) {
  std::vector<Vec2> wp{a};
  for (int k = 0; k < trips; ++k) wp.push_back(k % 2 == 0 ? b : a);
  return wp;
}

}  // namespace

std::vector<ScenarioConfig> preset_scenarios() {
  std::vector<ScenarioConfig> presets;

  {
    ScenarioConfig c;
    c.name = "single";
    c.bounds_min = Vec2(0, 0);
    c.bounds_max = Vec2(8, 6);
    c.walkers = {walker({{1.0, 1.0}, {6.5, 1.5}, {6.5, 4.5}, {1.5, 4.5}}, 1.0, 0.0)};
    c.objects = {wall_box(7.4, 0.5, 7.8, 5.5, 2.0, 240)};
    c.duration = 16.0;
    presets.push_back(c);
  }
  {
    ScenarioConfig c;
    c.name = "two";
    c.bounds_min = Vec2(0, 0);
    c.bounds_max = Vec2(8, 6);
    c.walkers = {
        walker({{1.0, 1.2}, {7.0, 1.2}, {1.0, 1.2}}, 1.0, 0.0),
        walker({{7.0, 4.8}, {1.0, 4.8}, {7.0, 4.8}}, 1.1, 2.0,
               {{0.0, "walking"}, {6.0, "single_wave"}, {9.0, "walking"}}),
    };
    c.objects = {wall_box(3.4, 2.8, 4.6, 3.2, 1.2, 160)};
    c.duration = 14.0;
    presets.push_back(c);
  }
  {
    ScenarioConfig c;
    c.name = "three";
    c.bounds_min = Vec2(0, 0);
    c.bounds_max = Vec2(10, 8);
    c.walkers = {
        walker({{1.0, 1.0}, {9.0, 1.5}, {9.0, 3.0}}, 1.0, 0.0),
        walker({{9.0, 6.8}, {1.0, 6.5}, {1.0, 5.0}}, 1.0, 2.0,
               {{0.0, "walking"}, {7.0, "bending"}}),
        walker({{1.0, 4.0}, {5.0, 4.2}}, 0.9, 4.0,
               {{0.0, "walking"}, {4.5, "normal_standing"}}, 4.0),
    };
    c.objects = {wall_box(9.4, 0.4, 9.8, 7.6, 2.0, 240)};
    c.duration = 16.0;
    presets.push_back(c);
  }
  {
    // Two shuttling walkers meeting head-on; 20 meetings = 20 crossovers.
    ScenarioConfig c;
    c.name = "crossover";
    c.bounds_min = Vec2(0, 0);
    c.bounds_max = Vec2(8, 6);
    c.walkers = {
        walker(shuttle({1.0, 2.9}, {7.0, 2.9}, 20), 1.2, 0.0),
        walker(shuttle({7.0, 3.1}, {1.0, 3.1}, 20), 1.2, 0.0),
    };
    c.duration = 100.0;  // 20 meetings at t = 2.5 + 5k, k = 0..19
    presets.push_back(c);
  }
  {
    ScenarioConfig c;
    c.name = "outdoor";
    c.bounds_min = Vec2(0, 0);
    c.bounds_max = Vec2(16, 12);
    c.noise_sigma = 0.06;
    c.dropout = 0.10;
    c.walkers = {
        walker({{1.0, 2.0}, {14.0, 3.0}, {14.0, 9.0}}, 1.3, 0.0),
        walker({{15.0, 10.0}, {2.0, 9.0}, {2.0, 3.0}}, 1.2, 2.0),
    };
    c.duration = 18.0;
    presets.push_back(c);
  }
  return presets;
}

std::optional<ScenarioConfig> find_scenario(const std::string& name) {
  for (ScenarioConfig& c : preset_scenarios())
    if (c.name == name) return c;

  if (name == "xcross") {
    // Perpendicular straight paths crossing at one third of each walk.
    ScenarioConfig c;
    c.name = "xcross";
    c.bounds_min = Vec2(0, 0);
    c.bounds_max = Vec2(16, 14);
    c.walkers = {
        walker({{2.0, 5.0}, {14.0, 5.0}}, 1.2, 0.0),
        walker({{6.0, 1.0}, {6.0, 13.0}}, 1.2, 0.0),
    };
    c.duration = 10.0;
    return c;
  }
  if (name == "bounce") {
    // Approach to 1.2 m, turn back; never inside the crossover radius.
    ScenarioConfig c;
    c.name = "bounce";
    c.bounds_min = Vec2(0, 0);
    c.bounds_max = Vec2(12, 10);
    c.walkers = {
        walker({{2.0, 5.0}, {5.4, 5.0}, {2.0, 5.0}}, 1.2, 0.0),
        walker({{10.0, 5.0}, {6.6, 5.0}, {10.0, 5.0}}, 1.2, 0.0),
    };
    c.duration = 7.0;
    return c;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// JSON round trip
// ---------------------------------------------------------------------------

namespace {

json vec2_json(const Vec2& v) { return json::array({v.x(), v.y()}); }
json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec2 vec2_from(const json& j) { return Vec2(j.at(0).get<double>(), j.at(1).get<double>()); }
Vec3 vec3_from(const json& j) {
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

}  // namespace

std::string scenario_to_json(const ScenarioConfig& c) {
  json walkers = json::array();
  for (const WalkerConfig& w : c.walkers) {
    json wps = json::array();
    for (const Vec2& p : w.waypoints) wps.push_back(vec2_json(p));
    json sched = json::array();
    for (const ActivityPhase& ph : w.schedule)
      sched.push_back({{"start", ph.start}, {"activity", ph.activity}});
    walkers.push_back({{"waypoints", std::move(wps)},
                       {"speed", w.speed},
                       {"entry_delay", w.entry_delay},
                       {"linger", w.linger},
                       {"schedule", std::move(sched)}});
  }
  json objects = json::array();
  for (const BoxObstacle& b : c.objects)
    objects.push_back({{"lo", vec3_json(b.lo)}, {"hi", vec3_json(b.hi)}, {"points", b.points}});
  json j{{"name", c.name},
         {"bounds_min", vec2_json(c.bounds_min)},
         {"bounds_max", vec2_json(c.bounds_max)},
         {"walkers", std::move(walkers)},
         {"body",
          {{"axes", vec3_json(c.body.axes)},
           {"points_per_frame", c.body.points_per_frame},
           {"head_height", c.body.head_height}}},
         {"noise_sigma", c.noise_sigma},
         {"dropout", c.dropout},
         {"objects", std::move(objects)},
         {"frame_rate", c.frame_rate},
         {"duration", c.duration},
         {"crossover_threshold", c.crossover_threshold},
         {"seed", c.seed}};
  return j.dump(2);
}

ScenarioConfig scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scenario config: ") + e.what());
  }
  ScenarioConfig c;
  try {
    c.name = j.value("name", c.name);
    if (j.contains("bounds_min")) c.bounds_min = vec2_from(j["bounds_min"]);
    if (j.contains("bounds_max")) c.bounds_max = vec2_from(j["bounds_max"]);
    for (const auto& wj : j.value("walkers", json::array())) {
      WalkerConfig w;
      w.waypoints.clear();
      for (const auto& pj : wj.at("waypoints")) w.waypoints.push_back(vec2_from(pj));
      w.speed = wj.value("speed", 1.0);
      w.entry_delay = wj.value("entry_delay", 0.0);
      w.linger = wj.value("linger", 0.0);
      if (wj.contains("schedule")) {
        w.schedule.clear();
        for (const auto& sj : wj["schedule"])
          w.schedule.push_back({sj.value("start", 0.0), sj.value("activity", "walking")});
      }
      c.walkers.push_back(std::move(w));
    }
    if (j.contains("body")) {
      const auto& bj = j["body"];
      if (bj.contains("axes")) c.body.axes = vec3_from(bj["axes"]);
      c.body.points_per_frame = bj.value("points_per_frame", c.body.points_per_frame);
      c.body.head_height = bj.value("head_height", c.body.head_height);
    }
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.dropout = j.value("dropout", c.dropout);
    for (const auto& oj : j.value("objects", json::array())) {
      BoxObstacle b;
      b.lo = vec3_from(oj.at("lo"));
      b.hi = vec3_from(oj.at("hi"));
      b.points = oj.value("points", b.points);
      c.objects.push_back(b);
    }
    c.frame_rate = j.value("frame_rate", c.frame_rate);
    c.duration = j.value("duration", c.duration);
    c.crossover_threshold = j.value("crossover_threshold", c.crossover_threshold);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario config: ") + e.what());
  }
  return c;
}

std::string events_to_json(const std::vector<CrossoverEvent>& events) {
  json arr = json::array();
  for (const CrossoverEvent& e : events)
    arr.push_back({{"walker_a", e.walker_a},
                   {"walker_b", e.walker_b},
                   {"first_frame", e.first_frame},
                   {"last_frame", e.last_frame}});
  return arr.dump(2);
}

}  // namespace palmar
