#include "aerossl/cld.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "aerossl/rng.hpp"

namespace aerossl {

std::vector<int> ClusterResult::occupancy() const {
  std::vector<int> counts(static_cast<std::size_t>(k()), 0);
  for (int a : assignments) ++counts[static_cast<std::size_t>(a)];
  return counts;
}

int ClusterResult::occupied() const {
  int n = 0;
  for (int c : occupancy()) n += c > 0 ? 1 : 0;
  return n;
}

void CldConfig::validate() const {
  if (clusters < 1) throw std::invalid_argument("cld clusters must be >= 1");
  if (!(weight >= 0)) throw std::invalid_argument("cld weight must be >= 0");
  if (!(tau_g > 0)) throw std::invalid_argument("cld temperature must be positive");
  if (kmeans_iters < 1) throw std::invalid_argument("kmeans_iters must be >= 1");
}

namespace {

double sqdist(const Mat& x, Eigen::Index i, const Mat& c, Eigen::Index j) {
  return (x.row(i) - c.row(j)).squaredNorm();
}

// Returns true when any assignment changed.
bool assign(const Mat& x, const Mat& c, std::vector<int>& labels, double& inertia) {
  bool changed = false;
  inertia = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    double best_d = sqdist(x, i, c, 0);
    for (Eigen::Index j = 1; j < c.rows(); ++j) {
      const double d = sqdist(x, i, c, j);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(j);
      }
    }
    if (labels[static_cast<std::size_t>(i)] != best) changed = true;
    labels[static_cast<std::size_t>(i)] = best;
    inertia += best_d;
  }
  return changed;
}

}  // namespace

ClusterResult local_kmeans(const Mat& features, int k, int iters, std::uint64_t seed) {
  const Eigen::Index n = features.rows();
  if (n < 1) throw std::invalid_argument("local_kmeans: empty input");
  if (k < 1) throw std::invalid_argument("local_kmeans: k must be >= 1");
  if (iters < 1) throw std::invalid_argument("local_kmeans: iters must be >= 1");

  ClusterResult r;
  r.centroids.resize(k, features.cols());
  Rng rng = make_rng(seed, {});
  const Eigen::Index first = uniform_int(rng, 0, static_cast<int>(n - 1));
  r.centroids.row(0) = features.row(first);
  Vec mind(n);
  for (Eigen::Index i = 0; i < n; ++i) mind(i) = sqdist(features, i, r.centroids, 0);
  for (int j = 1; j < k; ++j) {
    Eigen::Index far = 0;
    mind.maxCoeff(&far);
    r.centroids.row(j) = features.row(far);
    for (Eigen::Index i = 0; i < n; ++i) mind(i) = std::min(mind(i), sqdist(features, i, r.centroids, j));
  }

  r.assignments.assign(static_cast<std::size_t>(n), -1);
  double inertia = 0;
  assign(features, r.centroids, r.assignments, inertia);
  r.inertia_trace.push_back(inertia);

  for (int it = 0; it < iters; ++it) {
    Mat sums = Mat::Zero(k, features.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = r.assignments[static_cast<std::size_t>(i)];
      sums.row(a) += features.row(i);
      ++counts[static_cast<std::size_t>(a)];
    }
    for (int j = 0; j < k; ++j) {
      const double nrm = sums.row(j).norm();
      if (counts[static_cast<std::size_t>(j)] > 0 && nrm > 1e-12) r.centroids.row(j) = sums.row(j) / nrm;
    }
    // Move empty clusters onto the worst-fit samples. A sample is used at most
    // once and only if it sits away from its centroid.
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) continue;
      Eigen::Index far = -1;
      double far_d = 1e-12;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (taken[static_cast<std::size_t>(i)]) continue;
        const double d = sqdist(features, i, r.centroids, r.assignments[static_cast<std::size_t>(i)]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far < 0) break;
      taken[static_cast<std::size_t>(far)] = true;
      r.centroids.row(j) = features.row(far);
    }
    const bool changed = assign(features, r.centroids, r.assignments, inertia);
    r.inertia_trace.push_back(inertia);
    if (!changed) break;
  }
  // Keep centroids exactly unit length even when they were copied from inputs.
  for (int j = 0; j < k; ++j) {
    const double nrm = r.centroids.row(j).norm();
    if (nrm > 0) r.centroids.row(j) /= nrm;
  }
  r.inertia = inertia;
  return r;
}

namespace {

// Occupied centroids and, for every centroid index, its row in the compacted
// matrix (or -1 if empty).
Mat occupied_centroids(const ClusterResult& c, std::vector<int>& remap) {
  const auto occ = c.occupancy();
  remap.assign(occ.size(), -1);
  int rows = 0;
  for (std::size_t j = 0; j < occ.size(); ++j) {
    if (occ[j] > 0) remap[j] = rows++;
  }
  if (rows == 0) throw std::invalid_argument("cld loss needs at least one centroid");
  Mat out(rows, c.centroids.cols());
  for (std::size_t j = 0; j < occ.size(); ++j) {
    if (remap[j] >= 0) out.row(remap[j]) = c.centroids.row(static_cast<Eigen::Index>(j));
  }
  return out;
}

}  // namespace

double cld_loss(const Vec& g, const ClusterResult& other, int positive, double tau_g) {
  if (!(tau_g > 0)) throw std::invalid_argument("cld temperature must be positive");
  if (other.k() < 1) throw std::invalid_argument("cld loss needs at least one centroid");
  if (positive < 0 || positive >= other.k()) throw std::out_of_range("cld positive centroid index");
  std::vector<int> remap;
  Mat c;
  if (other.assignments.empty()) {
    c = other.centroids;
    remap.resize(static_cast<std::size_t>(other.k()));
    for (int j = 0; j < other.k(); ++j) remap[static_cast<std::size_t>(j)] = j;
  } else {
    c = occupied_centroids(other, remap);
  }
  const int target = remap[static_cast<std::size_t>(positive)];
  if (target < 0) throw std::invalid_argument("cld positive centroid is empty");
  if (c.cols() != g.size()) throw std::invalid_argument("cld_loss: dimension mismatch");
  return softmax_xent(c * g / tau_g, target, nullptr);
}

BatchLoss batch_cld_loss(const Mat& g, const ClusterResult& other, double tau_g) {
  if (!(tau_g > 0)) throw std::invalid_argument("cld temperature must be positive");
  if (g.rows() == 0) throw std::invalid_argument("cld: empty batch");
  if (static_cast<Eigen::Index>(other.assignments.size()) != g.rows()) {
    throw std::invalid_argument("cld: branch batch sizes differ");
  }
  std::vector<int> remap;
  const Mat c = occupied_centroids(other, remap);
  if (c.cols() != g.cols()) throw std::invalid_argument("cld: dimension mismatch");
  const Mat logits = g * c.transpose() / tau_g;
  BatchLoss out;
  Mat dlog(g.rows(), c.rows());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    Vec d;
    out.loss += softmax_xent(logits.row(i).transpose(), remap[static_cast<std::size_t>(other.assignments[i])], &d);
    dlog.row(i) = d.transpose();
  }
  const double n = static_cast<double>(g.rows());
  out.loss /= n;
  out.d_q = dlog * c / (n * tau_g);
  return out;
}

GroupLoss dual_branch_cld(const Mat& g1, const Mat& g2, const ClusterResult& c1, const ClusterResult& c2,
                          double tau_g) {
  if (g1.rows() == 0) throw std::invalid_argument("cld: empty batch");
  if (g1.rows() != g2.rows()) throw std::invalid_argument("cld: branch batch sizes differ");
  GroupLoss out;
  out.c1 = c1;
  out.c2 = c2;
  const BatchLoss a = batch_cld_loss(g1, c2, tau_g);
  const BatchLoss b = batch_cld_loss(g2, c1, tau_g);
  out.loss = 0.5 * (a.loss + b.loss);
  out.d_g1 = 0.5 * a.d_q;
  out.d_g2 = 0.5 * b.d_q;
  return out;
}

GroupLoss dual_branch_cld(const Mat& g1, const Mat& g2, const CldConfig& config) {
  config.validate();
  if (g1.rows() == 0) throw std::invalid_argument("cld: empty batch");
  if (g1.rows() != g2.rows()) throw std::invalid_argument("cld: branch batch sizes differ");
  const ClusterResult c1 = local_kmeans(g1, config.clusters, config.kmeans_iters, derive_seed(config.kmeans_seed, {1}));
  const ClusterResult c2 = local_kmeans(g2, config.clusters, config.kmeans_iters, derive_seed(config.kmeans_seed, {2}));
  return dual_branch_cld(g1, g2, c1, c2, config.tau_g);
}

double total_cld_loss(const Mat& q1, const Mat& q2, const Mat& k_plus, const Mat& negatives, const Mat& g1,
                      const Mat& g2, const CldConfig& config, double tau_q) {
  const double inst = 0.5 * (batch_info_nce(q1, k_plus, negatives, tau_q).loss +
                             batch_info_nce(q2, k_plus, negatives, tau_q).loss);
  return inst + config.weight * dual_branch_cld(g1, g2, config).loss;
}

}  // namespace aerossl
