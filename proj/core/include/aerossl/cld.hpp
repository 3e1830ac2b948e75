#pragma once

#include <cstdint>
#include <vector>

#include "aerossl/infonce.hpp"

namespace aerossl {

struct ClusterResult {
  Mat centroids;                 // k x m, unit rows
  std::vector<int> assignments;  // per sample
  double inertia = 0;            // sum of squared Euclidean distances to assigned centroids
  /// Inertia measured after every assignment pass.
  std::vector<double> inertia_trace;

  int k() const { return static_cast<int>(centroids.rows()); }
  std::vector<int> occupancy() const;
  int occupied() const;
};

struct CldConfig {
  int clusters = 32;
  double weight = 0.25;
  double tau_g = 0.4;
  int kmeans_iters = 10;
  std::uint64_t kmeans_seed = 0;

  void validate() const;
};

/// Spherical Lloyd k-means on unit rows: nearest centroid by Euclidean
/// distance, centroids re-normalized after each update, farthest-point
/// initialization from a seeded first pick. Empty clusters are moved to the
/// sample farthest from its centroid.
ClusterResult local_kmeans(const Mat& features, int k, int iters, std::uint64_t seed);

/// Cross-entropy of g against the occupied centroids of the other branch, with
/// centroid `positive` as target.
double cld_loss(const Vec& g, const ClusterResult& other, int positive, double tau_g);

/// Batch mean of cld_loss(g_i, other, other.assignments[i]); gradient with
/// respect to `g` (centroids are treated as constants).
BatchLoss batch_cld_loss(const Mat& g, const ClusterResult& other, double tau_g);

struct GroupLoss {
  double loss = 0;  // 0.5 * (L(g1, C(g2)) + L(g2, C(g1)))
  Mat d_g1, d_g2;
  ClusterResult c1, c2;
};

/// Clusters both branches and evaluates the symmetric cross-branch loss.
/// The two branches use seeds derived from `config.kmeans_seed` with tags 1 and 2.
GroupLoss dual_branch_cld(const Mat& g1, const Mat& g2, const CldConfig& config);
/// Same with clusterings supplied by the caller.
GroupLoss dual_branch_cld(const Mat& g1, const Mat& g2, const ClusterResult& c1, const ClusterResult& c2,
                          double tau_g);

/// 0.5 * [Lq(q1, k+) + Lq(q2, k+)] + weight * 0.5 * [Lg(g1, C(g2)) + Lg(g2, C(g1))],
/// each term averaged over the batch.
double total_cld_loss(const Mat& q1, const Mat& q2, const Mat& k_plus, const Mat& negatives, const Mat& g1,
                      const Mat& g2, const CldConfig& config, double tau_q);

}  // namespace aerossl
