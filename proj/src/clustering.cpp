#include "palmar/clustering.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <numeric>

namespace palmar {

std::size_t ClusterSet::total_points() const {
  std::size_t n = noise.size();
  for (const auto& c : clusters) n += c.size();
  return n;
}

void ClusterSet::validate(std::size_t n_points) const {
  std::vector<int> owner(n_points, -2);
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    if (clusters[k].empty()) throw ValidationError("ClusterSet: empty cluster");
    for (int i : clusters[k]) {
      if (i < 0 || static_cast<std::size_t>(i) >= n_points || owner[i] != -2)
        throw ValidationError("ClusterSet: clusters are not a disjoint cover");
      owner[i] = static_cast<int>(k);
    }
  }
  for (int i : noise) {
    if (i < 0 || static_cast<std::size_t>(i) >= n_points || owner[i] != -2)
      throw ValidationError("ClusterSet: noise overlaps a cluster");
    owner[i] = -1;
  }
  for (int o : owner)
    if (o == -2) throw ValidationError("ClusterSet: uncovered point index");
  if (centroids.size() != clusters.size())
    throw ValidationError("ClusterSet: centroid count mismatch");
}

namespace {

std::vector<Vec3> cluster_centroids(const std::vector<std::vector<int>>& clusters,
                                    std::span<const Vec3> points) {
  std::vector<Vec3> centroids;
  centroids.reserve(clusters.size());
  for (const auto& members : clusters) {
    Vec3 sum = Vec3::Zero();
    for (int i : members) sum += points[static_cast<std::size_t>(i)];
    centroids.push_back(sum / static_cast<double>(members.size()));
  }
  return centroids;
}

}  // namespace

ClusterSet dbscan(std::span<const Vec3> points, double eps, int min_pts, const WeightVector& w) {
  if (eps <= 0.0) throw ValidationError("dbscan: eps must be positive");
  if (min_pts < 1) throw ValidationError("dbscan: min_pts must be >= 1");
  const int n = static_cast<int>(points.size());
  const double eps_sq = eps * eps;

  constexpr int kUnvisited = -2, kNoise = -1;
  std::vector<int> label(static_cast<std::size_t>(n), kUnvisited);

  auto neighbors_of = [&](int i) {
    std::vector<int> nb;
    for (int j = 0; j < n; ++j)
      if (weighted_sq_distance(points[i], points[j], w) <= eps_sq) nb.push_back(j);
    return nb;
  };

  ClusterSet out;
  for (int i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    std::vector<int> nb = neighbors_of(i);
    if (static_cast<int>(nb.size()) < min_pts) {
      label[i] = kNoise;
      continue;
    }
    const int cluster_id = static_cast<int>(out.clusters.size());
    out.clusters.emplace_back();
    label[i] = cluster_id;
    out.clusters.back().push_back(i);
    std::deque<int> queue(nb.begin(), nb.end());
    while (!queue.empty()) {
      int j = queue.front();
      queue.pop_front();
      if (label[j] == kNoise) {  // border point claimed by the first cluster to reach it
        label[j] = cluster_id;
        out.clusters.back().push_back(j);
        continue;
      }
      if (label[j] != kUnvisited) continue;
      label[j] = cluster_id;
      out.clusters.back().push_back(j);
      std::vector<int> nbj = neighbors_of(j);
      if (static_cast<int>(nbj.size()) >= min_pts)
        queue.insert(queue.end(), nbj.begin(), nbj.end());
    }
    std::sort(out.clusters.back().begin(), out.clusters.back().end());
  }
  for (int i = 0; i < n; ++i)
    if (label[i] == kNoise) out.noise.push_back(i);
  out.centroids = cluster_centroids(out.clusters, points);
  return out;
}

// ---------------------------------------------------------------------------
// CF tree
// ---------------------------------------------------------------------------

struct CfTree::Node {
  bool leaf = true;
  std::vector<CfEntry> entries;                  // per child for interior nodes
  std::vector<std::unique_ptr<Node>> children;   // interior only

  int leaf_entry_count() const {
    if (leaf) return static_cast<int>(entries.size());
    int n = 0;
    for (const auto& c : children) n += c->leaf_entry_count();
    return n;
  }
};

CfTree::CfTree(double threshold, int branching, int max_leaf_entries)
    : threshold_(threshold), branching_(branching), max_leaf_entries_(max_leaf_entries) {
  if (threshold <= 0.0) throw ValidationError("CfTree: threshold must be positive");
  if (branching < 2) throw ValidationError("CfTree: branching factor must be >= 2");
  root_ = std::make_unique<Node>();
}

CfTree::~CfTree() = default;
CfTree::CfTree(CfTree&&) noexcept = default;
CfTree& CfTree::operator=(CfTree&&) noexcept = default;

namespace {

double entry_dist_sq(const CfEntry& a, const CfEntry& b) {
  return (a.centroid() - b.centroid()).squaredNorm();
}

int closest_entry(const std::vector<CfEntry>& entries, const CfEntry& e) {
  int best = 0;
  double best_d = std::numeric_limits<double>::max();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    double d = entry_dist_sq(entries[k], e);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

// Splits entries (and children, when interior) into two groups seeded by the
// farthest pair of centroids; every entry joins the nearer seed.
std::pair<std::vector<int>, std::vector<int>> split_groups(const std::vector<CfEntry>& entries) {
  int seed_a = 0, seed_b = 1;
  double far_d = -1.0;
  for (std::size_t i = 0; i < entries.size(); ++i)
    for (std::size_t j = i + 1; j < entries.size(); ++j) {
      double d = entry_dist_sq(entries[i], entries[j]);
      if (d > far_d) {
        far_d = d;
        seed_a = static_cast<int>(i);
        seed_b = static_cast<int>(j);
      }
    }
  std::vector<int> ga, gb;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    int ki = static_cast<int>(k);
    if (ki == seed_a) {
      ga.push_back(ki);
      continue;
    }
    if (ki == seed_b) {
      gb.push_back(ki);
      continue;
    }
    (entry_dist_sq(entries[k], entries[seed_a]) <= entry_dist_sq(entries[k], entries[seed_b]) ? ga
                                                                                              : gb)
        .push_back(ki);
  }
  return {std::move(ga), std::move(gb)};
}

}  // namespace

void CfTree::insert(const Vec3& p) {
  CfEntry e;
  e.add_point(p);
  total_.add(e);
  insert_entry(e);
  if (root_->leaf_entry_count() > max_leaf_entries_) rebuild();
}

void CfTree::insert_entry(const CfEntry& e) {
  // Descend to the leaf whose summary centroid is closest.
  std::vector<Node*> path;
  Node* node = root_.get();
  while (!node->leaf) {
    path.push_back(node);
    int k = closest_entry(node->entries, e);
    node->entries[static_cast<std::size_t>(k)].add(e);
    node = node->children[static_cast<std::size_t>(k)].get();
  }

  bool absorbed = false;
  if (!node->entries.empty()) {
    int k = closest_entry(node->entries, e);
    CfEntry merged = node->entries[static_cast<std::size_t>(k)];
    merged.add(e);
    if (merged.radius_sq() <= threshold_ * threshold_) {
      node->entries[static_cast<std::size_t>(k)] = merged;
      absorbed = true;
    }
  }
  if (!absorbed) node->entries.push_back(e);

  // Split overfull nodes bottom-up.
  Node* child = node;
  while (static_cast<int>(child->entries.size()) > branching_) {
    auto [ga, gb] = split_groups(child->entries);
    auto right = std::make_unique<Node>();
    right->leaf = child->leaf;
    Node left_content;
    left_content.leaf = child->leaf;
    CfEntry sum_a, sum_b;
    for (int k : ga) {
      sum_a.add(child->entries[static_cast<std::size_t>(k)]);
      left_content.entries.push_back(child->entries[static_cast<std::size_t>(k)]);
      if (!child->leaf) left_content.children.push_back(std::move(child->children[static_cast<std::size_t>(k)]));
    }
    for (int k : gb) {
      sum_b.add(child->entries[static_cast<std::size_t>(k)]);
      right->entries.push_back(child->entries[static_cast<std::size_t>(k)]);
      if (!child->leaf) right->children.push_back(std::move(child->children[static_cast<std::size_t>(k)]));
    }
    child->entries = std::move(left_content.entries);
    child->children = std::move(left_content.children);

    if (path.empty()) {
      // Root split: grow a new root over the two halves.
      auto left = std::make_unique<Node>();
      left->leaf = child->leaf;
      left->entries = std::move(child->entries);
      left->children = std::move(child->children);
      child->leaf = false;
      child->entries = {sum_a, sum_b};
      child->children.clear();
      child->children.push_back(std::move(left));
      child->children.push_back(std::move(right));
      break;
    }
    Node* parent = path.back();
    path.pop_back();
    // Locate the child slot and refresh its summary to the left half.
    for (std::size_t k = 0; k < parent->children.size(); ++k) {
      if (parent->children[k].get() == child) {
        parent->entries[k] = sum_a;
        parent->entries.insert(parent->entries.begin() + static_cast<long>(k) + 1, sum_b);
        parent->children.insert(parent->children.begin() + static_cast<long>(k) + 1,
                                std::move(right));
        break;
      }
    }
    child = parent;
  }
}

void CfTree::rebuild() {
  std::vector<CfEntry> entries = leaf_entries();
  threshold_ *= 2.0;
  ++rebuilds_;
  root_ = std::make_unique<Node>();
  for (const CfEntry& e : entries) insert_entry(e);
}

std::vector<CfEntry> CfTree::leaf_entries() const {
  std::vector<CfEntry> out;
  std::vector<const Node*> stack{root_.get()};
  while (!stack.empty()) {
    const Node* node = stack.back();
    stack.pop_back();
    if (node->leaf) {
      out.insert(out.end(), node->entries.begin(), node->entries.end());
    } else {
      for (auto it = node->children.rbegin(); it != node->children.rend(); ++it)
        stack.push_back(it->get());
    }
  }
  return out;
}

CfEntry CfTree::total() const { return total_; }

// ---------------------------------------------------------------------------
// BIRCH
// ---------------------------------------------------------------------------

namespace {

int closest_entry_centroid(const std::vector<Vec3>& centroids, const Vec3& p,
                           const WeightVector& w) {
  int best = 0;
  double best_d = std::numeric_limits<double>::max();
  for (std::size_t k = 0; k < centroids.size(); ++k) {
    double d = weighted_sq_distance(centroids[k], p, w);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

}  // namespace

ClusterSet birch_fit(std::span<const Vec3> points, const BirchParams& params) {
  ClusterSet out;
  if (points.empty()) return out;

  int cap = params.k_hint > 0 ? std::max(256, 32 * params.k_hint) : 1024;
  CfTree tree(params.threshold, params.branching, cap);
  tree.insert_all(points.begin(), points.end());

  std::vector<CfEntry> entries = tree.leaf_entries();
  std::vector<Vec3> entry_centroids;
  entry_centroids.reserve(entries.size());
  for (const CfEntry& e : entries) entry_centroids.push_back(e.centroid());

  // Global clustering over the leaf-entry centroids. The effective threshold
  // may have grown through rebuilds, so scale eps off the final value.
  const double leaf_eps = params.leaf_eps_factor * tree.threshold();
  ClusterSet leaf_clusters = dbscan(entry_centroids, leaf_eps, params.leaf_min_pts, params.weights);

  std::vector<int> entry_label(entries.size(), -1);
  for (std::size_t k = 0; k < leaf_clusters.clusters.size(); ++k)
    for (int e : leaf_clusters.clusters[k]) entry_label[static_cast<std::size_t>(e)] = static_cast<int>(k);

  out.clusters.resize(leaf_clusters.clusters.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    int e = closest_entry_centroid(entry_centroids, points[i], params.weights);
    int label = entry_label[static_cast<std::size_t>(e)];
    if (label < 0)
      out.noise.push_back(static_cast<int>(i));
    else
      out.clusters[static_cast<std::size_t>(label)].push_back(static_cast<int>(i));
  }
  // Entries whose cluster got no points (possible after reassignment) leave
  // empty clusters behind; drop them.
  std::vector<std::vector<int>> kept;
  for (auto& c : out.clusters)
    if (!c.empty()) kept.push_back(std::move(c));
  out.clusters = std::move(kept);
  out.centroids = cluster_centroids(out.clusters, points);
  return out;
}

ClusterSet birch_fit(std::span<const Vec3> points, double threshold, int branching, int k_hint) {
  BirchParams p;
  p.threshold = threshold;
  p.branching = branching;
  p.k_hint = k_hint;
  return birch_fit(points, p);
}

// ---------------------------------------------------------------------------
// Person clustering
// ---------------------------------------------------------------------------

namespace {

ClusterSet filter_person_sized(ClusterSet cs, const PersonClusterConfig& config) {
  ClusterSet out;
  out.noise = std::move(cs.noise);
  for (std::size_t k = 0; k < cs.clusters.size(); ++k) {
    const int size = static_cast<int>(cs.clusters[k].size());
    if (size >= config.min_cells && size <= config.max_cells) {
      out.clusters.push_back(std::move(cs.clusters[k]));
      out.centroids.push_back(cs.centroids[k]);
    } else {
      out.noise.insert(out.noise.end(), cs.clusters[k].begin(), cs.clusters[k].end());
    }
  }
  std::sort(out.noise.begin(), out.noise.end());
  return out;
}

}  // namespace

ClusterSet estimate_person_clusters(const VoxelGrid& grid, const PersonClusterConfig& config) {
  std::vector<Vec3> centers = grid.occupied_centers();
  if (centers.empty()) return ClusterSet{};

  const double cell = grid.grid.cell_size.mean();
  const double eps = config.eps_cells * cell;
  WeightVector w = default_weights(config.alpha);
  ClusterSet cs = dbscan(centers, eps, config.min_pts, w);

  // DBSCAN degrades in crowded scenes; refine with the CF-tree pass.
  if (config.birch_refine && cs.clusters.size() > 2) {
    BirchParams bp;
    bp.threshold = config.birch_threshold;
    bp.branching = config.birch_branching;
    bp.k_hint = static_cast<int>(cs.clusters.size());
    bp.weights = w;
    bp.leaf_eps_factor = std::max(1.0, eps / config.birch_threshold);
    cs = birch_fit(centers, bp);
  }
  return filter_person_sized(std::move(cs), config);
}

int largest_cluster_cells(const VoxelGrid& grid, const PersonClusterConfig& config) {
  ClusterSet cs = estimate_person_clusters(grid, config);
  int best = 0;
  for (const auto& c : cs.clusters) best = std::max(best, static_cast<int>(c.size()));
  return best;
}

}  // namespace palmar
