#pragma once

#include <memory>
#include <span>
#include <vector>

#include "palmar/preprocess.hpp"
#include "palmar/types.hpp"

namespace palmar {

/// Axis weights for the clustering metric; z carries the alpha factor that
/// discounts vertical spread.
using WeightVector = Vec3;

inline WeightVector default_weights(double alpha = 0.25) { return WeightVector(1.0, 1.0, alpha); }

/// wx(px-qx)^2 + wy(py-qy)^2 + wz(pz-qz)^2
inline double weighted_sq_distance(const Vec3& p, const Vec3& q, const WeightVector& w) {
  return (w.array() * (p - q).array().square()).sum();
}

/// Disjoint clusters plus a noise set; together they cover every input index.
struct ClusterSet {
  std::vector<std::vector<int>> clusters;
  std::vector<int> noise;
  std::vector<Vec3> centroids;  // arithmetic mean of each cluster's members

  std::size_t total_points() const;
  void validate(std::size_t n_points) const;  // partition invariant
};

/// Density clustering with the weighted metric; neighborhoods are
/// weighted_sq_distance <= eps^2 (neighborhood includes the point itself).
/// Deterministic given input order: clusters are discovered in index order
/// and a border point joins the first cluster that reaches it.
ClusterSet dbscan(std::span<const Vec3> points, double eps, int min_pts,
                  const WeightVector& w = WeightVector::Ones());

/// Clustering feature: point count, linear sum, and sum of squared norms.
/// CF(A u B) = (N_A+N_B, LS_A+LS_B, SS_A+SS_B).
struct CfEntry {
  double n = 0.0;
  Vec3 ls = Vec3::Zero();
  double ss = 0.0;

  void add_point(const Vec3& p) {
    n += 1.0;
    ls += p;
    ss += p.squaredNorm();
  }
  void add(const CfEntry& o) {
    n += o.n;
    ls += o.ls;
    ss += o.ss;
  }
  Vec3 centroid() const { return ls / n; }
  /// Mean squared distance of members to the centroid.
  double radius_sq() const {
    double r2 = ss / n - (ls / n).squaredNorm();
    return r2 > 0.0 ? r2 : 0.0;
  }
};

/// Height-balanced CF tree built in a single pass over the point stream.
/// A point is absorbed into the closest leaf entry when the merged entry
/// radius stays within the threshold, else it opens a new entry; overfull
/// nodes split by the farthest pair of entry centroids. When the leaf-entry
/// count exceeds the cap, the tree rebuilds itself once with a doubled
/// threshold by reinserting the existing entries (the raw stream is still
/// consumed exactly once).
class CfTree {
 public:
  CfTree(double threshold, int branching, int max_leaf_entries = 1024);
  ~CfTree();
  CfTree(CfTree&&) noexcept;
  CfTree& operator=(CfTree&&) noexcept;

  void insert(const Vec3& p);

  template <typename InputIt>
  void insert_all(InputIt first, InputIt last) {
    for (; first != last; ++first) insert(*first);
  }

  /// Leaf entries in left-to-right tree order.
  std::vector<CfEntry> leaf_entries() const;
  CfEntry total() const;  // CF over everything inserted
  double threshold() const { return threshold_; }
  int rebuild_count() const { return rebuilds_; }

 private:
  struct Node;
  void insert_entry(const CfEntry& e);
  void rebuild();

  double threshold_;
  int branching_;
  int max_leaf_entries_;
  int rebuilds_ = 0;
  std::unique_ptr<Node> root_;
  CfEntry total_;
};

struct BirchParams {
  double threshold = 0.3;  // T, meters
  int branching = 8;       // B
  int k_hint = 0;          // expected cluster count; seeds the rebuild cap
  double leaf_eps_factor = 2.5;  // phase-2 DBSCAN eps as a multiple of T
  int leaf_min_pts = 1;
  WeightVector weights = WeightVector::Ones();
};

/// Two-phase BIRCH: one streaming pass builds the CF tree, then DBSCAN over
/// the leaf-entry centroids labels the entries and every point inherits the
/// label of its nearest leaf entry. The cluster count is data-driven; k_hint
/// only sizes the rebuild schedule.
ClusterSet birch_fit(std::span<const Vec3> points, const BirchParams& params);
ClusterSet birch_fit(std::span<const Vec3> points, double threshold, int branching, int k_hint);

struct PersonClusterConfig {
  double eps_cells = 2.5;   // DBSCAN radius in cell widths
  int min_pts = 5;
  double alpha = 0.25;      // z weight
  int min_cells = 30;       // person-size bounds (occupied cells)
  int max_cells = 5000;
  double birch_threshold = 0.3;  // meters
  int birch_branching = 8;
  bool birch_refine = true;      // off for the DBSCAN-only ablation
};

/// Person clusters from one voxelized frame: DBSCAN over occupied-cell
/// centers, refined with BIRCH when more than two clusters appear, then
/// filtered by person-size bounds (rejected clusters become noise).
ClusterSet estimate_person_clusters(const VoxelGrid& grid, const PersonClusterConfig& config);

/// Occupied-cell count of the largest person-sized cluster (trim predicate).
int largest_cluster_cells(const VoxelGrid& grid, const PersonClusterConfig& config);

}  // namespace palmar
