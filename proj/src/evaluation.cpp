#include "palmar/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "palmar/assignment.hpp"

namespace palmar {

namespace {

struct TrackView {
  int id;
  std::map<int, Vec2> pos;  // frame -> 2D position
};

std::vector<TrackView> track_views(const TrackSet& tracks) {
  std::vector<TrackView> views;
  for (const Track& tr : tracks.tracks) {
    TrackView v;
    v.id = tr.id;
    for (const TrackPoint& tp : tr.points) v.pos[tp.frame] = tp.pos;
    views.push_back(std::move(v));
  }
  return views;
}

struct PersonView {
  int id;
  std::map<int, Vec2> pos;
};

std::vector<PersonView> person_views(const GroundTruth& truth) {
  std::map<int, PersonView> acc;
  for (std::size_t f = 0; f < truth.size(); ++f)
    for (const PersonTruth& p : truth[f].persons) {
      acc[p.id].id = p.id;
      acc[p.id].pos[static_cast<int>(f)] = p.head.head<2>();
    }
  std::vector<PersonView> out;
  for (auto& [id, v] : acc) out.push_back(std::move(v));
  return out;
}

}  // namespace

TrackingReport euclidean_error(const TrackSet& tracks, const GroundTruth& truth,
                               const EvalParams& params) {
  TrackingReport rep;
  std::vector<PersonView> persons = person_views(truth);
  std::vector<TrackView> views = track_views(tracks);
  for (const PersonView& p : persons) rep.gt_person_frames += static_cast<int>(p.pos.size());
  if (persons.empty()) return rep;

  // Sequence-level identity binding: person -> track minimizing the summed
  // per-frame cost (distance where both exist, miss penalty otherwise).
  std::vector<int> bound(persons.size(), -1);
  if (!views.empty()) {
    MatX cost(static_cast<long>(persons.size()), static_cast<long>(views.size()));
    for (std::size_t g = 0; g < persons.size(); ++g)
      for (std::size_t k = 0; k < views.size(); ++k) {
        double c = 0.0;
        for (const auto& [frame, gp] : persons[g].pos) {
          auto it = views[k].pos.find(frame);
          c += (it != views[k].pos.end()) ? (gp - it->second).norm() : params.miss_penalty;
        }
        cost(static_cast<long>(g), static_cast<long>(k)) = c;
      }
    bound = min_cost_assignment(cost);
  }

  double sum = 0.0;
  double mn = std::numeric_limits<double>::max();
  double mx = 0.0;
  long matched_frames = 0;
  for (std::size_t g = 0; g < persons.size(); ++g) {
    if (bound[g] < 0) {
      rep.misses += static_cast<int>(persons[g].pos.size());
      continue;
    }
    const TrackView& tv = views[static_cast<std::size_t>(bound[g])];
    for (const auto& [frame, gp] : persons[g].pos) {
      auto it = tv.pos.find(frame);
      if (it == tv.pos.end()) {
        rep.misses += 1;
        continue;
      }
      double d = (gp - it->second).norm();
      sum += d;
      mn = std::min(mn, d);
      mx = std::max(mx, d);
      ++matched_frames;
    }
  }
  rep.mean_ed = matched_frames > 0 ? sum / matched_frames : 0.0;
  rep.min_ed = matched_frames > 0 ? mn : 0.0;
  rep.max_ed = mx;

  // Per-frame re-matching: localization ED, switches, identity accuracy.
  std::map<int, int> prev_match;  // person id -> track id at the last matched frame
  double frame_sum = 0.0;
  long frame_matched = 0;
  long stable = 0;
  for (std::size_t f = 0; f < truth.size(); ++f) {
    const int frame = static_cast<int>(f);
    std::vector<std::size_t> gs, ks;
    for (std::size_t g = 0; g < persons.size(); ++g)
      if (persons[g].pos.count(frame)) gs.push_back(g);
    for (std::size_t k = 0; k < views.size(); ++k)
      if (views[k].pos.count(frame)) ks.push_back(k);
    if (gs.empty() || ks.empty()) continue;

    MatX cost(static_cast<long>(gs.size()), static_cast<long>(ks.size()));
    for (std::size_t a = 0; a < gs.size(); ++a)
      for (std::size_t b = 0; b < ks.size(); ++b)
        cost(static_cast<long>(a), static_cast<long>(b)) =
            (persons[gs[a]].pos.at(frame) - views[ks[b]].pos.at(frame)).norm();
    std::vector<int> match = min_cost_assignment_gated(cost, params.match_gate);

    for (std::size_t a = 0; a < gs.size(); ++a) {
      if (match[a] < 0) continue;
      const std::size_t k = ks[static_cast<std::size_t>(match[a])];
      const int person_id = persons[gs[a]].id;
      const int track_id = views[k].id;
      frame_sum += cost(static_cast<long>(a), match[a]);
      ++frame_matched;
      auto it = prev_match.find(person_id);
      if (it != prev_match.end() && it->second != track_id) rep.identity_switches += 1;
      prev_match[person_id] = track_id;
      if (bound[gs[a]] >= 0 && views[static_cast<std::size_t>(bound[gs[a]])].id == track_id)
        ++stable;
    }
  }
  rep.frame_ed = frame_matched > 0 ? frame_sum / frame_matched : 0.0;
  rep.identity_accuracy = frame_matched > 0 ? static_cast<double>(stable) / frame_matched : 1.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Kalman baseline
// ---------------------------------------------------------------------------

namespace {

struct KfTrack {
  int id;
  Eigen::Vector4d x;  // px, py, vx, vy
  Eigen::Matrix4d P;
  int misses = 0;
  int observed = 0;
  bool alive = true;
  std::vector<TrackPoint> points;
};

}  // namespace

TrackSet kalman_baseline(const std::vector<std::vector<Observation2D>>& observation_frames,
                         const std::vector<double>& frame_times, const KalmanParams& params) {
  std::vector<KfTrack> tracks;
  int next_id = 0;

  Eigen::Matrix<double, 2, 4> H = Eigen::Matrix<double, 2, 4>::Zero();
  H(0, 0) = 1.0;
  H(1, 1) = 1.0;
  const Eigen::Matrix2d R = Eigen::Matrix2d::Identity() *
                            (params.measurement_noise * params.measurement_noise);

  for (std::size_t f = 0; f < observation_frames.size(); ++f) {
    const double dt = f > 0 && frame_times.size() > f
                          ? std::max(1e-6, frame_times[f] - frame_times[f - 1])
                          : 0.1;
    Eigen::Matrix4d F = Eigen::Matrix4d::Identity();
    F(0, 2) = dt;
    F(1, 3) = dt;
    Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
    const double q = params.process_noise;
    const double dt2 = dt * dt, dt3 = dt2 * dt;
    Q(0, 0) = Q(1, 1) = q * dt3 / 3.0;
    Q(0, 2) = Q(2, 0) = Q(1, 3) = Q(3, 1) = q * dt2 / 2.0;
    Q(2, 2) = Q(3, 3) = q * dt;

    std::vector<std::size_t> live;
    for (std::size_t k = 0; k < tracks.size(); ++k)
      if (tracks[k].alive) live.push_back(k);

    for (std::size_t k : live) {
      tracks[k].x = F * tracks[k].x;
      tracks[k].P = F * tracks[k].P * F.transpose() + Q;
    }

    const auto& obs = observation_frames[f];
    std::vector<int> obs_track(obs.size(), -1);
    if (!live.empty() && !obs.empty()) {
      MatX cost(static_cast<long>(live.size()), static_cast<long>(obs.size()));
      for (std::size_t i = 0; i < live.size(); ++i)
        for (std::size_t j = 0; j < obs.size(); ++j)
          cost(static_cast<long>(i), static_cast<long>(j)) =
              (tracks[live[i]].x.head<2>() - obs[j].pos).norm();
      std::vector<int> assign = min_cost_assignment_gated(cost, params.assign_gate);
      for (std::size_t i = 0; i < live.size(); ++i)
        if (assign[i] >= 0) obs_track[static_cast<std::size_t>(assign[i])] = static_cast<int>(live[i]);
    }

    for (std::size_t j = 0; j < obs.size(); ++j) {
      if (obs_track[j] >= 0) {
        KfTrack& tr = tracks[static_cast<std::size_t>(obs_track[j])];
        Eigen::Vector2d innov = obs[j].pos - H * tr.x;
        Eigen::Matrix2d S = H * tr.P * H.transpose() + R;
        Eigen::Matrix<double, 4, 2> K = tr.P * H.transpose() * S.inverse();
        tr.x += K * innov;
        tr.P = (Eigen::Matrix4d::Identity() - K * H) * tr.P;
        tr.misses = 0;
        tr.observed += 1;
      } else {
        KfTrack tr;
        tr.id = next_id++;
        tr.x << obs[j].pos.x(), obs[j].pos.y(), 0.0, 0.0;
        tr.P = Eigen::Matrix4d::Identity();
        tr.P(2, 2) = tr.P(3, 3) = 4.0;
        tr.observed = 1;
        tracks.push_back(tr);
        obs_track[j] = static_cast<int>(tracks.size() - 1);
      }
    }

    for (std::size_t k = 0; k < tracks.size(); ++k) {
      KfTrack& tr = tracks[k];
      if (!tr.alive) continue;
      bool seen = std::find(obs_track.begin(), obs_track.end(), static_cast<int>(k)) != obs_track.end();
      if (!seen) {
        tr.misses += 1;
        if (tr.misses > params.max_misses) {
          tr.alive = false;
          continue;
        }
      }
      TrackPoint tp;
      tp.frame = static_cast<int>(f);
      tp.t = frame_times.size() > f ? frame_times[f] : static_cast<double>(f);
      tp.pos = tr.x.head<2>();
      tp.observed = seen;
      tp.state = -1;  // no lattice; filled by the pipeline when needed
      tr.points.push_back(tp);
    }
  }

  TrackSet out;
  out.frame_times = frame_times;
  for (KfTrack& tr : tracks) {
    if (tr.observed < params.min_observed_frames) continue;
    // Trim the coasted tail after the last observation.
    int last_obs = -1;
    for (const TrackPoint& tp : tr.points)
      if (tp.observed) last_obs = tp.frame;
    Track t;
    t.id = tr.id;
    for (const TrackPoint& tp : tr.points)
      if (tp.frame <= last_obs) t.points.push_back(tp);
    if (t.points.empty()) continue;
    t.birth_frame = t.points.front().frame;
    t.death_frame = t.points.back().frame;
    out.tracks.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Variants, recognition report, CSV
// ---------------------------------------------------------------------------

std::string to_string(TrackerVariant v) {
  switch (v) {
    case TrackerVariant::tracker1: return "tracker1";
    case TrackerVariant::no_birch: return "no-birch";
    case TrackerVariant::no_aohmm: return "no-aohmm";
    case TrackerVariant::no_cpda: return "no-cpda";
    case TrackerVariant::full: return "full";
  }
  return "full";
}

TrackerVariant tracker_variant_from_string(const std::string& s) {
  if (s == "tracker1" || s == "kalman") return TrackerVariant::tracker1;
  if (s == "no-birch") return TrackerVariant::no_birch;
  if (s == "no-aohmm") return TrackerVariant::no_aohmm;
  if (s == "no-cpda") return TrackerVariant::no_cpda;
  if (s == "full") return TrackerVariant::full;
  throw ConfigError("unknown tracker variant: " + s);
}

RecognitionReport recognition_report(const std::vector<int>& predictions,
                                     const std::vector<int>& labels, int n_classes) {
  if (predictions.size() != labels.size())
    throw ValidationError("recognition_report: length mismatch");
  RecognitionReport rep;
  rep.confusion = Eigen::MatrixXi::Zero(n_classes, n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes || predictions[i] < 0 ||
        predictions[i] >= n_classes)
      throw ValidationError("recognition_report: label outside the class set");
    rep.confusion(labels[i], predictions[i]) += 1;
  }
  const double total = static_cast<double>(labels.size());
  rep.accuracy = total > 0 ? rep.confusion.diagonal().sum() / total : 0.0;
  rep.precision = VecX::Zero(n_classes);
  rep.recall = VecX::Zero(n_classes);
  for (int c = 0; c < n_classes; ++c) {
    const double col = rep.confusion.col(c).sum();
    const double row = rep.confusion.row(c).sum();
    rep.precision[c] = col > 0 ? rep.confusion(c, c) / col : 0.0;
    rep.recall[c] = row > 0 ? rep.confusion(c, c) / row : 0.0;
  }
  return rep;
}

std::vector<double> per_frame_ed(const TrackSet& tracks, const GroundTruth& truth,
                                 const EvalParams& params) {
  std::vector<PersonView> persons = person_views(truth);
  std::vector<TrackView> views = track_views(tracks);
  std::vector<double> out(truth.size(), 0.0);
  for (std::size_t f = 0; f < truth.size(); ++f) {
    const int frame = static_cast<int>(f);
    std::vector<std::size_t> gs, ks;
    for (std::size_t g = 0; g < persons.size(); ++g)
      if (persons[g].pos.count(frame)) gs.push_back(g);
    for (std::size_t k = 0; k < views.size(); ++k)
      if (views[k].pos.count(frame)) ks.push_back(k);
    if (gs.empty() || ks.empty()) continue;
    MatX cost(static_cast<long>(gs.size()), static_cast<long>(ks.size()));
    for (std::size_t a = 0; a < gs.size(); ++a)
      for (std::size_t b = 0; b < ks.size(); ++b)
        cost(static_cast<long>(a), static_cast<long>(b)) =
            (persons[gs[a]].pos.at(frame) - views[ks[b]].pos.at(frame)).norm();
    std::vector<int> match = min_cost_assignment_gated(cost, params.match_gate);
    double sum = 0.0;
    int n = 0;
    for (std::size_t a = 0; a < gs.size(); ++a)
      if (match[a] >= 0) {
        sum += cost(static_cast<long>(a), match[a]);
        ++n;
      }
    out[f] = n > 0 ? sum / n : 0.0;
  }
  return out;
}

void write_tracking_csv(const std::vector<TrackingReport>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("write_tracking_csv: cannot open " + path);
  out << "scenario,config,seed,mean_ed,min_ed,max_ed,frame_ed,identity_switches,misses,"
         "identity_accuracy,gt_person_frames,reduction_percent\n";
  char buf[512];
  for (const TrackingReport& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%llu,%.6f,%.6f,%.6f,%.6f,%d,%d,%.6f,%d,%.2f\n",
                  r.scenario.c_str(), r.config.c_str(), static_cast<unsigned long long>(r.seed),
                  r.mean_ed, r.min_ed, r.max_ed, r.frame_ed, r.identity_switches, r.misses,
                  r.identity_accuracy, r.gt_person_frames, r.reduction_percent);
    out << buf;
  }
}

void write_recognition_csv(const RecognitionReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("write_recognition_csv: cannot open " + path);
  out << "accuracy," << rep.accuracy << "\n";
  out << "class,precision,recall";
  for (int c = 0; c < rep.confusion.cols(); ++c) out << ",confusion_" << c;
  out << "\n";
  for (int c = 0; c < rep.confusion.rows(); ++c) {
    out << c << "," << rep.precision[c] << "," << rep.recall[c];
    for (int j = 0; j < rep.confusion.cols(); ++j) out << "," << rep.confusion(c, j);
    out << "\n";
  }
}

}  // namespace palmar
