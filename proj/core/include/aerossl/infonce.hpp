#pragma once

#include <Eigen/Dense>

namespace aerossl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Dot products of a unit query against each row of `keys`.
Vec cosine_scores(const Vec& q, const Mat& keys);

/// Softmax cross-entropy over [q.k_pos, q.neg_1, ..., q.neg_K] / tau with the
/// positive as target. `negatives` is K x m and may be empty.
double info_nce(const Vec& q, const Vec& k_pos, const Mat& negatives, double tau);

struct InfoNceGrad {
  double loss = 0;
  Vec d_q;
  Vec d_k;
};
InfoNceGrad info_nce_grad(const Vec& q, const Vec& k_pos, const Mat& negatives, double tau);

/// Batch-mean InfoNCE for rows of `q` against matching rows of `k`, sharing
/// the negatives. Gradient is with respect to `q` only (keys are detached).
struct BatchLoss {
  double loss = 0;
  Mat d_q;
};
BatchLoss batch_info_nce(const Mat& q, const Mat& k, const Mat& negatives, double tau);

/// Softmax cross-entropy of `logits` with the given target, and its gradient.
double softmax_xent(const Vec& logits, Eigen::Index target, Vec* d_logits);

Mat normalize_rows(const Mat& z);
/// Gradient through row-wise L2 normalization: given dL/du at u = z/|z|, returns dL/dz.
Mat normalize_rows_backward(const Mat& z, const Mat& d_unit);
bool rows_unit_norm(const Mat& z, double tol = 1e-6);

}  // namespace aerossl
