#include "palmar/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "palmar/assignment.hpp"

namespace palmar {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// State space
// ---------------------------------------------------------------------------

StateSpace2D StateSpace2D::over_bounds(const Vec2& lo, const Vec2& hi, double cell, double margin) {
  if (cell <= 0.0) throw ValidationError("StateSpace2D: cell size must be positive");
  StateSpace2D s;
  s.cell = cell;
  s.origin = lo - Vec2::Constant(margin);
  Vec2 span = hi - lo + Vec2::Constant(2.0 * margin);
  s.dims = Vec2i(std::max(1, static_cast<int>(std::ceil(span.x() / cell))),
                 std::max(1, static_cast<int>(std::ceil(span.y() / cell))));
  return s;
}

int StateSpace2D::nearest_state(const Vec2& p) const {
  Vec2i c = cell_of(p);
  c.x() = std::clamp(c.x(), 0, dims.x() - 1);
  c.y() = std::clamp(c.y(), 0, dims.y() - 1);
  return state_of(c);
}

std::vector<int> StateSpace2D::block(int s, int hops) const {
  Vec2i c = cell_coords(s);
  std::vector<int> out;
  for (int dy = -hops; dy <= hops; ++dy)
    for (int dx = -hops; dx <= hops; ++dx) {
      Vec2i n(c.x() + dx, c.y() + dy);
      if (in_bounds(n)) out.push_back(state_of(n));
    }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> active_states(const std::vector<int>& prev_active, const StateSpace2D& space,
                               bool overlap) {
  const int hops = overlap ? 2 : 1;
  std::set<int> acc;
  for (int s : prev_active) {
    std::vector<int> b = space.block(s, hops);
    acc.insert(b.begin(), b.end());
  }
  return std::vector<int>(acc.begin(), acc.end());
}

// ---------------------------------------------------------------------------
// Viterbi decoding
// ---------------------------------------------------------------------------

namespace {

void validate_trellis(const Trellis& tr) {
  const int n = tr.steps();
  if (n == 0) throw ValidationError("viterbi: empty trellis");
  if (tr.prior_log.size() != static_cast<long>(tr.active[0].size()))
    throw ValidationError("viterbi: prior size mismatch");
  if (static_cast<int>(tr.emission_log.size()) != n)
    throw ValidationError("viterbi: emission step count mismatch");
  if (static_cast<int>(tr.trans_log.size()) != n)
    throw ValidationError("viterbi: transition step count mismatch (index 0 unused)");
}

DecodedPath path_from_states(const Trellis& tr, const std::vector<int>& idx_path) {
  DecodedPath path;
  path.total_loglik = 0.0;
  path.states.resize(idx_path.size());
  path.step_loglik.resize(idx_path.size());
  for (std::size_t t = 0; t < idx_path.size(); ++t)
    path.states[t] = tr.active[t][static_cast<std::size_t>(idx_path[t])];
  return path;
}

double momentum_of(const Trellis& tr, int a, int b, int c) {
  return tr.momentum_log ? tr.momentum_log(a, b, c) : 0.0;
}

// log sum_k exp(trans(j,k) + momentum(a,j,k)) over the step's active set.
double pair_log_normalizer(const Trellis& tr, int t, int a_state, int j_idx) {
  const MatX& T = tr.trans_log[static_cast<std::size_t>(t)];
  const auto& next = tr.active[static_cast<std::size_t>(t)];
  const int j_state = tr.active[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(j_idx)];
  double max_v = kNegInf;
  for (std::size_t k = 0; k < next.size(); ++k) {
    double base = T(j_idx, static_cast<long>(k));
    if (base == kNegInf) continue;
    max_v = std::max(max_v, base + momentum_of(tr, a_state, j_state, next[k]));
  }
  if (max_v == kNegInf) return kNegInf;
  double sum = 0.0;
  for (std::size_t k = 0; k < next.size(); ++k) {
    double base = T(j_idx, static_cast<long>(k));
    if (base == kNegInf) continue;
    sum += std::exp(base + momentum_of(tr, a_state, j_state, next[k]) - max_v);
  }
  return max_v + std::log(sum);
}

}  // namespace

DecodedPath viterbi_first_order(const Trellis& tr) {
  validate_trellis(tr);
  const int n = tr.steps();

  std::vector<VecX> score(static_cast<std::size_t>(n));
  std::vector<std::vector<int>> back(static_cast<std::size_t>(n));
  score[0] = tr.prior_log + tr.emission_log[0];
  if (score[0].maxCoeff() == kNegInf)
    throw NumericError("viterbi: no admissible state at step 0");

  for (int t = 1; t < n; ++t) {
    const auto& cur = tr.active[static_cast<std::size_t>(t)];
    const MatX& T = tr.trans_log[static_cast<std::size_t>(t)];
    score[t] = VecX::Constant(static_cast<long>(cur.size()), kNegInf);
    back[t].assign(cur.size(), -1);
    for (std::size_t j = 0; j < cur.size(); ++j) {
      double best = kNegInf;
      int best_i = -1;
      for (long i = 0; i < score[t - 1].size(); ++i) {
        if (score[t - 1][i] == kNegInf || T(i, static_cast<long>(j)) == kNegInf) continue;
        double v = score[t - 1][i] + T(i, static_cast<long>(j));
        if (v > best) {
          best = v;
          best_i = static_cast<int>(i);
        }
      }
      if (best_i >= 0) {
        score[t][static_cast<long>(j)] = best + tr.emission_log[static_cast<std::size_t>(t)][static_cast<long>(j)];
        back[t][j] = best_i;
      }
    }
    if (score[t].maxCoeff() == kNegInf)
      throw NumericError("viterbi: no admissible path into step " + std::to_string(t));
  }

  std::vector<int> idx(static_cast<std::size_t>(n));
  long last;
  score[static_cast<std::size_t>(n - 1)].maxCoeff(&last);
  idx[static_cast<std::size_t>(n - 1)] = static_cast<int>(last);
  for (int t = n - 1; t > 0; --t)
    idx[static_cast<std::size_t>(t - 1)] = back[static_cast<std::size_t>(t)][static_cast<std::size_t>(idx[static_cast<std::size_t>(t)])];

  DecodedPath path = path_from_states(tr, idx);
  path.total_loglik = score[static_cast<std::size_t>(n - 1)][idx[static_cast<std::size_t>(n - 1)]];
  double prev = 0.0;
  for (int t = 0; t < n; ++t) {
    double cum = score[static_cast<std::size_t>(t)][idx[static_cast<std::size_t>(t)]];
    path.step_loglik[static_cast<std::size_t>(t)] = cum - prev;
    prev = cum;
  }
  return path;
}

DecodedPath viterbi_second_order(const Trellis& tr) {
  validate_trellis(tr);
  const int n = tr.steps();
  if (n == 1) return viterbi_first_order(tr);

  // Pair DP over (s_{t-1}, s_t); flagged steps add the renormalized momentum.
  const auto& a0 = tr.active[0];
  const auto& a1 = tr.active[1];
  MatX pair = MatX::Constant(static_cast<long>(a0.size()), static_cast<long>(a1.size()), kNegInf);
  for (std::size_t i = 0; i < a0.size(); ++i) {
    double base = tr.prior_log[static_cast<long>(i)] + tr.emission_log[0][static_cast<long>(i)];
    if (base == kNegInf) continue;
    for (std::size_t j = 0; j < a1.size(); ++j) {
      double trans = tr.trans_log[1](static_cast<long>(i), static_cast<long>(j));
      if (trans == kNegInf) continue;
      pair(static_cast<long>(i), static_cast<long>(j)) =
          base + trans + tr.emission_log[1][static_cast<long>(j)];
    }
  }

  // Backpointers: predecessor index i of the pair (j,k) chosen at step t.
  std::vector<Eigen::MatrixXi> back(static_cast<std::size_t>(n));
  for (int t = 2; t < n; ++t) {
    const auto& prev = tr.active[static_cast<std::size_t>(t - 1)];
    const auto& prev2 = tr.active[static_cast<std::size_t>(t - 2)];
    const auto& cur = tr.active[static_cast<std::size_t>(t)];
    const MatX& T = tr.trans_log[static_cast<std::size_t>(t)];
    const bool use_momentum =
        t < static_cast<int>(tr.second_order.size()) && tr.second_order[static_cast<std::size_t>(t)];

    MatX next = MatX::Constant(static_cast<long>(prev.size()), static_cast<long>(cur.size()), kNegInf);
    Eigen::MatrixXi bp = Eigen::MatrixXi::Constant(static_cast<long>(prev.size()),
                                                   static_cast<long>(cur.size()), -1);
    for (std::size_t j = 0; j < prev.size(); ++j) {
      for (std::size_t i = 0; i < prev2.size(); ++i) {
        double base = pair(static_cast<long>(i), static_cast<long>(j));
        if (base == kNegInf) continue;
        double logz = 0.0;
        if (use_momentum) {
          logz = pair_log_normalizer(tr, t, prev2[i], static_cast<int>(j));
          if (logz == kNegInf) continue;
        }
        for (std::size_t k = 0; k < cur.size(); ++k) {
          double trans = T(static_cast<long>(j), static_cast<long>(k));
          if (trans == kNegInf) continue;
          double step = trans;
          if (use_momentum) step += momentum_of(tr, prev2[i], prev[j], cur[k]) - logz;
          double v = base + step + tr.emission_log[static_cast<std::size_t>(t)][static_cast<long>(k)];
          if (v > next(static_cast<long>(j), static_cast<long>(k))) {
            next(static_cast<long>(j), static_cast<long>(k)) = v;
            bp(static_cast<long>(j), static_cast<long>(k)) = static_cast<int>(i);
          }
        }
      }
    }
    if (next.maxCoeff() == kNegInf)
      throw NumericError("viterbi: no admissible path into step " + std::to_string(t));
    pair = std::move(next);
    back[static_cast<std::size_t>(t)] = std::move(bp);
  }

  // Recover the best terminal pair, then walk the pair chain backwards.
  long bi = 0, bj = 0;
  pair.maxCoeff(&bi, &bj);
  std::vector<int> idx(static_cast<std::size_t>(n));
  idx[static_cast<std::size_t>(n - 1)] = static_cast<int>(bj);
  idx[static_cast<std::size_t>(n - 2)] = static_cast<int>(bi);
  for (int t = n - 1; t >= 2; --t) {
    int i = back[static_cast<std::size_t>(t)](idx[static_cast<std::size_t>(t - 1)],
                                              idx[static_cast<std::size_t>(t)]);
    idx[static_cast<std::size_t>(t - 2)] = i;
  }

  DecodedPath path = path_from_states(tr, idx);
  path.total_loglik = pair(bi, bj);
  // Per-step contributions are recovered by replaying the chosen path.
  path.step_loglik.assign(static_cast<std::size_t>(n), 0.0);
  double cum = tr.prior_log[idx[0]] + tr.emission_log[0][idx[0]];
  path.step_loglik[0] = cum;
  for (int t = 1; t < n; ++t) {
    double step = tr.trans_log[static_cast<std::size_t>(t)](idx[static_cast<std::size_t>(t - 1)],
                                                            idx[static_cast<std::size_t>(t)]);
    const bool use_momentum = t >= 2 && t < static_cast<int>(tr.second_order.size()) &&
                              tr.second_order[static_cast<std::size_t>(t)];
    if (use_momentum) {
      int a = tr.active[static_cast<std::size_t>(t - 2)][static_cast<std::size_t>(idx[static_cast<std::size_t>(t - 2)])];
      int b = tr.active[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(idx[static_cast<std::size_t>(t - 1)])];
      int c = tr.active[static_cast<std::size_t>(t)][static_cast<std::size_t>(idx[static_cast<std::size_t>(t)])];
      step += momentum_of(tr, a, b, c) -
              pair_log_normalizer(tr, t, a, idx[static_cast<std::size_t>(t - 1)]);
    }
    step += tr.emission_log[static_cast<std::size_t>(t)][idx[static_cast<std::size_t>(t)]];
    path.step_loglik[static_cast<std::size_t>(t)] = step;
  }
  return path;
}

// ---------------------------------------------------------------------------
// Grid trellis
// ---------------------------------------------------------------------------

Trellis build_grid_trellis(const StateSpace2D& space, const HmmParams& params,
                           const std::vector<std::optional<Vec2>>& obs,
                           const std::vector<std::uint8_t>& overlap_flags,
                           std::optional<int> seed_state) {
  if (obs.empty()) throw ValidationError("build_grid_trellis: empty window");
  const int n = static_cast<int>(obs.size());

  Trellis tr;
  tr.second_order.assign(static_cast<std::size_t>(n), 0);
  for (int t = 0; t < n && t < static_cast<int>(overlap_flags.size()); ++t)
    tr.second_order[static_cast<std::size_t>(t)] = overlap_flags[static_cast<std::size_t>(t)];

  // Seed the first active set from the previous window's end state and/or the
  // first observation's nearest cell.
  std::vector<int> seed;
  if (seed_state) seed.push_back(*seed_state);
  if (obs[0]) {
    if (!space.contains(*obs[0]))
      throw NumericError("decode: observation outside the state space");
    seed.push_back(space.nearest_state(*obs[0]));
  }
  if (seed.empty()) {
    for (int t = 1; t < n && seed.empty(); ++t)
      if (obs[static_cast<std::size_t>(t)])
        seed.push_back(space.nearest_state(*obs[static_cast<std::size_t>(t)]));
  }
  if (seed.empty()) throw ValidationError("build_grid_trellis: window has no observations");
  std::sort(seed.begin(), seed.end());
  seed.erase(std::unique(seed.begin(), seed.end()), seed.end());

  tr.active.resize(static_cast<std::size_t>(n));
  tr.active[0] = active_states(seed, space, tr.second_order[0] != 0);
  for (int t = 1; t < n; ++t)
    tr.active[static_cast<std::size_t>(t)] =
        active_states(tr.active[static_cast<std::size_t>(t - 1)], space,
                      tr.second_order[static_cast<std::size_t>(t)] != 0);

  const double inv_two_sigma_sq = 1.0 / (2.0 * params.emission_sigma * params.emission_sigma);
  const double log_norm = -std::log(2.0 * M_PI * params.emission_sigma * params.emission_sigma);
  tr.emission_log.resize(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    const auto& act = tr.active[static_cast<std::size_t>(t)];
    VecX em = VecX::Zero(static_cast<long>(act.size()));
    if (obs[static_cast<std::size_t>(t)]) {
      const Vec2 o = *obs[static_cast<std::size_t>(t)];
      if (!space.contains(o)) throw NumericError("decode: observation outside the state space");
      for (std::size_t k = 0; k < act.size(); ++k)
        em[static_cast<long>(k)] = log_norm - (space.center(act[k]) - o).squaredNorm() * inv_two_sigma_sq;
    }
    tr.emission_log[static_cast<std::size_t>(t)] = std::move(em);
  }

  tr.prior_log = VecX::Constant(static_cast<long>(tr.active[0].size()),
                                -std::log(static_cast<double>(tr.active[0].size())));

  tr.trans_log.resize(static_cast<std::size_t>(n));
  for (int t = 1; t < n; ++t) {
    const auto& prev = tr.active[static_cast<std::size_t>(t - 1)];
    const auto& cur = tr.active[static_cast<std::size_t>(t)];
    MatX T = MatX::Constant(static_cast<long>(prev.size()), static_cast<long>(cur.size()), kNegInf);
    for (std::size_t i = 0; i < prev.size(); ++i) {
      int n1 = 0, n2 = 0;
      bool self_ok = false;
      for (std::size_t j = 0; j < cur.size(); ++j) {
        int h = space.hop_distance(prev[i], cur[j]);
        if (h == 0) self_ok = true;
        else if (h == 1) ++n1;
        else if (h == 2) ++n2;
      }
      double total = (self_ok ? params.p_self : 0.0) + (n1 > 0 ? params.p_hop1 : 0.0) +
                     (n2 > 0 ? params.p_hop2 : 0.0);
      if (total <= 0.0) continue;
      for (std::size_t j = 0; j < cur.size(); ++j) {
        int h = space.hop_distance(prev[i], cur[j]);
        double p = 0.0;
        if (h == 0) p = params.p_self;
        else if (h == 1) p = params.p_hop1 / n1;
        else if (h == 2) p = params.p_hop2 / n2;
        else continue;
        T(static_cast<long>(i), static_cast<long>(j)) = std::log(p / total);
      }
    }
    tr.trans_log[static_cast<std::size_t>(t)] = std::move(T);
  }

  const double log_persistence = std::log(params.persistence);
  tr.momentum_log = [&space, log_persistence](int a, int b, int c) {
    Vec2i d1 = space.cell_coords(b) - space.cell_coords(a);
    Vec2i d2 = space.cell_coords(c) - space.cell_coords(b);
    return d1 == d2 ? log_persistence : 0.0;
  };
  return tr;
}

// ---------------------------------------------------------------------------
// Projection
// ---------------------------------------------------------------------------

std::vector<Observation2D> project_to_2d(const ClusterSet& clusters) {
  std::vector<Observation2D> out;
  out.reserve(clusters.clusters.size());
  for (std::size_t k = 0; k < clusters.clusters.size(); ++k) {
    Observation2D o;
    o.pos = clusters.centroids[k].head<2>();
    o.cluster_index = static_cast<int>(k);
    o.size = static_cast<int>(clusters.clusters[k].size());
    out.push_back(o);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Online tracker
// ---------------------------------------------------------------------------

OnlineTracker::OnlineTracker(const StateSpace2D& space, const TrackerConfig& config)
    : space_(space), config_(config) {
  if (config_.max_misses <= 0) config_.max_misses = 2 * config_.hmm.window;
}

void OnlineTracker::push(double t, const std::vector<Observation2D>& observations) {
  times_.push_back(t);

  // Frame-level overlap: any two observations within the overlap radius.
  bool overlap = false;
  for (std::size_t a = 0; a < observations.size() && !overlap; ++a)
    for (std::size_t b = a + 1; b < observations.size(); ++b)
      if ((observations[a].pos - observations[b].pos).norm() < config_.hmm.overlap_radius) {
        overlap = true;
        break;
      }
  overlap_flags_.push_back(overlap ? 1 : 0);

  // Assign observations to live targets by nearest predicted position.
  std::vector<std::size_t> live;
  for (std::size_t k = 0; k < targets_.size(); ++k)
    if (targets_[k].alive) live.push_back(k);

  std::vector<int> target_of_obs(observations.size(), -1);
  if (!live.empty() && !observations.empty()) {
    MatX cost(static_cast<long>(live.size()), static_cast<long>(observations.size()));
    for (std::size_t i = 0; i < live.size(); ++i) {
      const Target& tg = targets_[live[i]];
      Vec2 predicted = config_.use_aohmm ? Vec2(tg.pos + tg.vel) : tg.pos;
      for (std::size_t j = 0; j < observations.size(); ++j)
        cost(static_cast<long>(i), static_cast<long>(j)) = (predicted - observations[j].pos).norm();
    }
    std::vector<int> row_to_col = min_cost_assignment_gated(cost, config_.assign_gate);
    for (std::size_t i = 0; i < live.size(); ++i)
      if (row_to_col[i] >= 0) target_of_obs[static_cast<std::size_t>(row_to_col[i])] = static_cast<int>(live[i]);
  }

  // Births before extending buffers: a count change splits the window here.
  bool count_changed = false;
  std::vector<std::size_t> newborn;
  for (std::size_t j = 0; j < observations.size(); ++j) {
    if (target_of_obs[j] >= 0) continue;
    Target tg;
    tg.id = next_id_++;
    tg.pos = observations[j].pos;
    tg.vel = Vec2::Zero();
    tg.last_observed_frame = frame_;
    tg.window_obs.assign(static_cast<std::size_t>(frame_ - window_start_), std::nullopt);
    targets_.push_back(tg);
    target_of_obs[j] = static_cast<int>(targets_.size() - 1);
    newborn.push_back(targets_.size() - 1);
    count_changed = true;
  }

  // Update matched targets, coast the rest.
  std::vector<char> got(targets_.size(), 0);
  for (std::size_t j = 0; j < observations.size(); ++j) {
    int ti = target_of_obs[j];
    if (ti < 0) continue;
    Target& tg = targets_[static_cast<std::size_t>(ti)];
    got[static_cast<std::size_t>(ti)] = 1;
    if (tg.last_observed_frame < frame_) {  // newborns already point here
      Vec2 displacement = observations[j].pos - tg.pos;
      int gap = std::max(1, frame_ - tg.last_observed_frame);
      if (config_.use_aohmm)
        tg.vel = 0.5 * tg.vel + 0.5 * (displacement / gap);
      tg.pos = observations[j].pos;
      tg.last_observed_frame = frame_;
      tg.misses = 0;
    }
    tg.window_obs.push_back(observations[j].pos);
  }
  for (std::size_t k = 0; k < targets_.size(); ++k) {
    Target& tg = targets_[k];
    if (!tg.alive || got[k]) continue;
    if (config_.use_aohmm) tg.pos += tg.vel;  // model-rolled coast
    tg.misses += 1;
    tg.window_obs.push_back(std::nullopt);
    if (tg.misses > config_.max_misses) {
      tg.alive = false;
      count_changed = true;
    }
  }

  ++frame_;
  if (count_changed || frame_ - window_start_ >= config_.hmm.window) flush_window(frame_);
}

void OnlineTracker::flush_window(int end_frame) {
  const int len = end_frame - window_start_;
  if (len <= 0) return;

  WindowDecode wd;
  wd.window_index = window_index_++;
  wd.start_frame = window_start_;

  std::vector<std::uint8_t> flags(overlap_flags_.end() - len, overlap_flags_.end());

  for (Target& tg : targets_) {
    if (tg.window_obs.empty()) continue;
    // The buffer covers [window_start_, end_frame) for every target that
    // existed during the window; newborns joined mid-window with padding.
    std::vector<std::optional<Vec2>> obs = tg.window_obs;
    if (static_cast<int>(obs.size()) != len) {
      // Target born before this window keeps full-length buffers; guard
      // against any mismatch by padding at the front.
      std::vector<std::optional<Vec2>> padded(static_cast<std::size_t>(len), std::nullopt);
      std::copy(obs.begin(), obs.end(), padded.end() - static_cast<long>(obs.size()));
      obs = std::move(padded);
    }

    bool any = std::any_of(obs.begin(), obs.end(), [](const auto& o) { return o.has_value(); });
    if (any) {
      DecodedPath path;
      path.target_id = tg.id;
      path.window_index = wd.window_index;
      path.start_frame = window_start_;
      path.observed.resize(obs.size());
      for (std::size_t t = 0; t < obs.size(); ++t) path.observed[t] = obs[t].has_value();

      if (config_.use_aohmm) {
        Trellis tr = build_grid_trellis(space_, config_.hmm, obs, flags, tg.seed_state);
        DecodedPath decoded = viterbi_second_order(tr);
        path.states = std::move(decoded.states);
        path.step_loglik = std::move(decoded.step_loglik);
        path.total_loglik = decoded.total_loglik;
      } else {
        // Chained fallback: snap observations, hold the last cell in gaps.
        path.states.resize(obs.size());
        int last = tg.seed_state.value_or(-1);
        for (std::size_t t = 0; t < obs.size(); ++t) {
          if (obs[t]) last = space_.nearest_state(*obs[t]);
          if (last < 0) {
            for (std::size_t u = t; u < obs.size() && last < 0; ++u)
              if (obs[u]) last = space_.nearest_state(*obs[u]);
          }
          path.states[t] = last;
        }
        path.step_loglik.assign(obs.size(), 0.0);
      }

      path.positions.resize(obs.size());
      for (std::size_t t = 0; t < obs.size(); ++t)
        path.positions[t] = obs[t] ? *obs[t] : space_.center(path.states[t]);
      tg.seed_state = path.states.back();
      wd.paths.push_back(std::move(path));
    }
    tg.window_obs.clear();
  }

  windows_.push_back(std::move(wd));
  window_start_ = end_frame;
}

TrackSet OnlineTracker::finish() {
  flush_window(frame_);

  // Drop clutter targets with too little support.
  std::map<int, int> observed_count;
  for (const WindowDecode& wd : windows_)
    for (const DecodedPath& p : wd.paths)
      for (std::uint8_t o : p.observed) observed_count[p.target_id] += o ? 1 : 0;
  std::vector<WindowDecode> kept = windows_;
  for (WindowDecode& wd : kept) {
    std::vector<DecodedPath> paths;
    for (DecodedPath& p : wd.paths)
      if (observed_count[p.target_id] >= config_.min_observed_frames)
        paths.push_back(std::move(p));
    wd.paths = std::move(paths);
  }

  if (config_.use_cpda) {
    CpdaParams cp;
    cp.crossover_radius = config_.crossover_radius;
    cp.window = config_.hmm.window;
    cp.horizon_windows = config_.hmm.cpda_windows;
    return cpda(kept, times_, cp);
  }
  return stitch_tracks(kept, times_);
}

// ---------------------------------------------------------------------------
// Batch decode
// ---------------------------------------------------------------------------

std::vector<DecodedPath> aohmm_decode(const std::vector<std::vector<Observation2D>>& window_observations,
                                      const HmmParams& params, const StateSpace2D& space) {
  TrackerConfig cfg;
  cfg.hmm = params;
  cfg.use_cpda = false;
  cfg.min_observed_frames = 1;
  OnlineTracker tracker(space, cfg);
  double t = 0.0;
  for (const auto& obs : window_observations) {
    tracker.push(t, obs);
    t += 1.0;
  }
  tracker.finish();
  std::vector<DecodedPath> out;
  for (const WindowDecode& wd : tracker.windows())
    for (const DecodedPath& p : wd.paths) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// Stitching and CPDA
// ---------------------------------------------------------------------------

namespace {

struct Stitched {
  // Frame-indexed geometry per persistent id, in id order.
  std::vector<int> ids;
  // per track: (frame -> point); contiguous segments with possible gaps
  std::vector<std::map<int, TrackPoint>> points;
};

Stitched collect(const std::vector<WindowDecode>& windows, const std::vector<double>& times) {
  std::map<int, std::map<int, TrackPoint>> acc;
  for (const WindowDecode& wd : windows) {
    for (const DecodedPath& p : wd.paths) {
      auto& track = acc[p.target_id];
      for (std::size_t t = 0; t < p.states.size(); ++t) {
        int frame = p.start_frame + static_cast<int>(t);
        TrackPoint tp;
        tp.frame = frame;
        tp.t = frame < static_cast<int>(times.size()) ? times[static_cast<std::size_t>(frame)] : frame;
        tp.state = p.states[t];
        tp.pos = p.positions[t];
        tp.observed = p.observed[t] != 0;
        track[frame] = tp;
      }
    }
  }
  // Trim coasted tails: a track ends at its last observed frame.
  Stitched out;
  for (auto& [id, pts] : acc) {
    int last_observed = -1;
    for (const auto& [frame, tp] : pts)
      if (tp.observed) last_observed = frame;
    if (last_observed < 0) continue;
    std::map<int, TrackPoint> trimmed;
    for (const auto& [frame, tp] : pts)
      if (frame <= last_observed) trimmed[frame] = tp;
    out.ids.push_back(id);
    out.points.push_back(std::move(trimmed));
  }
  return out;
}

TrackSet to_track_set(const Stitched& st, const std::vector<double>& times) {
  TrackSet ts;
  ts.frame_times = times;
  for (std::size_t k = 0; k < st.ids.size(); ++k) {
    Track tr;
    tr.id = st.ids[k];
    if (st.points[k].empty()) continue;
    tr.birth_frame = st.points[k].begin()->first;
    tr.death_frame = st.points[k].rbegin()->first;
    for (const auto& [frame, tp] : st.points[k]) tr.points.push_back(tp);
    ts.tracks.push_back(std::move(tr));
  }
  return ts;
}

Vec2 mean_velocity(const std::map<int, TrackPoint>& pts, int from_frame, int to_frame) {
  // Average per-frame displacement over present consecutive frames.
  Vec2 sum = Vec2::Zero();
  int n = 0;
  for (int f = from_frame; f < to_frame; ++f) {
    auto a = pts.find(f);
    auto b = pts.find(f + 1);
    if (a == pts.end() || b == pts.end()) continue;
    sum += b->second.pos - a->second.pos;
    ++n;
  }
  return n > 0 ? Vec2(sum / n) : Vec2::Zero();
}

struct Interaction {
  int first_frame = 0;
  int last_frame = 0;
  std::set<int> participants;  // indices into Stitched arrays
};

std::vector<Interaction> find_interactions(const Stitched& st, const CpdaParams& params) {
  // Pairwise close intervals, then union into events.
  struct PairInterval {
    int a, b, f0, f1;
  };
  std::vector<PairInterval> intervals;
  for (std::size_t a = 0; a < st.ids.size(); ++a)
    for (std::size_t b = a + 1; b < st.ids.size(); ++b) {
      int open = -1;
      int last_close = -1;
      auto flush = [&](int end) {
        if (open >= 0) intervals.push_back({static_cast<int>(a), static_cast<int>(b), open, end});
        open = -1;
      };
      const auto& pa = st.points[a];
      const auto& pb = st.points[b];
      if (pa.empty() || pb.empty()) continue;
      int f_lo = std::max(pa.begin()->first, pb.begin()->first);
      int f_hi = std::min(pa.rbegin()->first, pb.rbegin()->first);
      for (int f = f_lo; f <= f_hi; ++f) {
        auto ia = pa.find(f);
        auto ib = pb.find(f);
        bool close = ia != pa.end() && ib != pb.end() &&
                     (ia->second.pos - ib->second.pos).norm() < params.crossover_radius;
        if (close) {
          if (open < 0) open = f;
          last_close = f;
        } else if (open >= 0 && f - last_close > params.window) {
          flush(last_close);
        }
      }
      flush(last_close);
    }
  std::sort(intervals.begin(), intervals.end(),
            [](const PairInterval& x, const PairInterval& y) { return x.f0 < y.f0; });

  // Merge overlapping intervals that share a participant into events.
  std::vector<Interaction> events;
  const int merge_gap = params.horizon_windows * params.window;
  for (const PairInterval& iv : intervals) {
    bool merged = false;
    for (Interaction& ev : events) {
      bool shares = ev.participants.count(iv.a) || ev.participants.count(iv.b);
      bool near = iv.f0 <= ev.last_frame + merge_gap && iv.f1 >= ev.first_frame - merge_gap;
      if (shares && near) {
        ev.first_frame = std::min(ev.first_frame, iv.f0);
        ev.last_frame = std::max(ev.last_frame, iv.f1);
        ev.participants.insert(iv.a);
        ev.participants.insert(iv.b);
        merged = true;
        break;
      }
    }
    if (!merged) {
      Interaction ev;
      ev.first_frame = iv.f0;
      ev.last_frame = iv.f1;
      ev.participants = {iv.a, iv.b};
      events.push_back(ev);
    }
  }
  std::sort(events.begin(), events.end(),
            [](const Interaction& x, const Interaction& y) { return x.first_frame < y.first_frame; });
  return events;
}

void permute_all(std::vector<int>& items, std::vector<std::vector<int>>& out) {
  std::sort(items.begin(), items.end());
  do {
    out.push_back(items);
  } while (std::next_permutation(items.begin(), items.end()));
}

}  // namespace

TrackSet stitch_tracks(const std::vector<WindowDecode>& windows,
                       const std::vector<double>& frame_times) {
  return to_track_set(collect(windows, frame_times), frame_times);
}

TrackSet cpda(const std::vector<WindowDecode>& windows, const std::vector<double>& frame_times,
              const CpdaParams& params) {
  Stitched st = collect(windows, frame_times);

  std::vector<Interaction> events = find_interactions(st, params);
  for (const Interaction& ev : events) {
    std::vector<int> group(ev.participants.begin(), ev.participants.end());
    if (group.size() < 2 || group.size() > 5) continue;

    // Only tracks that actually continue through the event can swap.
    std::vector<int> active;
    for (int k : group) {
      const auto& pts = st.points[static_cast<std::size_t>(k)];
      bool before = pts.begin()->first < ev.first_frame;
      bool after = pts.rbegin()->first > ev.last_frame;
      if (before && after) active.push_back(k);
    }
    if (active.size() < 2) continue;

    const int vf = params.velocity_frames;
    std::map<int, Vec2> v_before, v_after;
    for (int k : active) {
      const auto& pts = st.points[static_cast<std::size_t>(k)];
      v_before[k] = mean_velocity(pts, ev.first_frame - vf, ev.first_frame);
      v_after[k] = mean_velocity(pts, ev.last_frame, ev.last_frame + vf);
    }

    // Identity i adopts the post-event geometry of pi(i); minimize the summed
    // velocity discontinuity. Identity mapping wins ties.
    std::vector<std::vector<int>> perms;
    std::vector<int> base = active;
    permute_all(base, perms);
    double best_cost = std::numeric_limits<double>::max();
    std::vector<int> best = active;
    for (const auto& perm : perms) {
      double cost = 0.0;
      for (std::size_t i = 0; i < active.size(); ++i)
        cost += (v_after[perm[i]] - v_before[active[i]]).squaredNorm();
      bool identity = std::equal(perm.begin(), perm.end(), active.begin());
      if (cost < best_cost - 1e-12 || (identity && cost < best_cost + 1e-12)) {
        best_cost = cost;
        best = perm;
      }
    }

    bool is_identity = std::equal(best.begin(), best.end(), active.begin());
    if (is_identity) continue;

    // Swap the post-midpoint geometry among the permuted tracks.
    const int f_mid = (ev.first_frame + ev.last_frame) / 2;
    std::map<int, std::map<int, TrackPoint>> suffixes;
    for (std::size_t i = 0; i < active.size(); ++i) {
      auto& pts = st.points[static_cast<std::size_t>(best[i])];
      auto it = pts.upper_bound(f_mid);
      std::map<int, TrackPoint> suffix(it, pts.end());
      suffixes[active[i]] = std::move(suffix);
    }
    for (std::size_t i = 0; i < active.size(); ++i) {
      auto& pts = st.points[static_cast<std::size_t>(best[i])];
      pts.erase(pts.upper_bound(f_mid), pts.end());
    }
    for (std::size_t i = 0; i < active.size(); ++i) {
      auto& pts = st.points[static_cast<std::size_t>(active[i])];
      for (auto& [frame, tp] : suffixes[active[i]]) pts[frame] = tp;
    }
  }

  return to_track_set(st, frame_times);
}

// ---------------------------------------------------------------------------
// Person point extraction
// ---------------------------------------------------------------------------

PersonPoints extract_person_points(const VoxelGrid& voxels, const TrackSet& tracks,
                                   int frame_index, double radius) {
  PersonPoints out;
  std::vector<std::pair<int, Vec2>> live;  // (track id, position at frame)
  for (const Track& tr : tracks.tracks)
    for (const TrackPoint& tp : tr.points)
      if (tp.frame == frame_index) {
        live.emplace_back(tr.id, tp.pos);
        break;
      }
  std::sort(live.begin(), live.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  out.track_ids.reserve(live.size());
  out.cells.resize(live.size());
  for (const auto& [id, pos] : live) out.track_ids.push_back(id);

  const double r_sq = radius * radius;
  for (long idx : voxels.occupied_indices()) {
    Vec3 c = voxels.grid.cell_center(voxels.grid.unlinear(idx));
    Vec2 c2 = c.head<2>();
    int best = -1;
    double best_d = r_sq;
    for (std::size_t k = 0; k < live.size(); ++k) {
      double d = (live[k].second - c2).squaredNorm();
      if (d < best_d || (best >= 0 && d == best_d && live[k].first < live[static_cast<std::size_t>(best)].first)) {
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    if (best >= 0)
      out.cells[static_cast<std::size_t>(best)].push_back(idx);
    else
      out.unassigned.push_back(idx);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Track IO
// ---------------------------------------------------------------------------

void write_tracks(const TrackSet& tracks, const StateSpace2D& space, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("write_tracks: cannot open " + path);
  using nlohmann::json;

  const int n_frames = static_cast<int>(tracks.frame_times.size());
  for (int f = 0; f < n_frames; ++f) {
    json arr = json::array();
    for (const Track& tr : tracks.tracks) {
      for (const TrackPoint& tp : tr.points) {
        if (tp.frame != f) continue;
        Vec2i cell = space.cell_coords(tp.state);
        arr.push_back({{"id", tr.id},
                       {"cell", {cell.x(), cell.y()}},
                       {"pos", {tp.pos.x(), tp.pos.y()}}});
        break;
      }
    }
    json line{{"t", tracks.frame_times[static_cast<std::size_t>(f)]}, {"tracks", std::move(arr)}};
    out << line.dump() << '\n';
  }
  if (!out) throw ValidationError("write_tracks: write failed: " + path);
}

}  // namespace palmar
