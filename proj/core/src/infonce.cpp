#include "aerossl/infonce.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace aerossl {

namespace {

void check_tau(double tau) {
  if (!(tau > 0)) throw std::invalid_argument("temperature must be positive");
}

void check_dim(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                                std::to_string(b) + ")");
  }
}

}  // namespace

Vec cosine_scores(const Vec& q, const Mat& keys) {
  check_dim(keys.cols(), q.size(), "cosine_scores");
  return keys * q;
}

double softmax_xent(const Vec& logits, Eigen::Index target, Vec* d_logits) {
  const double mx = logits.maxCoeff();
  const Vec e = (logits.array() - mx).exp().matrix();
  const double z = e.sum();
  if (d_logits) {
    *d_logits = e / z;
    (*d_logits)(target) -= 1.0;
  }
  return std::log(z) + mx - logits(target);
}

namespace {

Vec nce_logits(const Vec& q, const Vec& k_pos, const Mat& negatives, double tau) {
  check_tau(tau);
  check_dim(k_pos.size(), q.size(), "info_nce");
  if (negatives.rows() > 0) check_dim(negatives.cols(), q.size(), "info_nce negatives");
  Vec logits(1 + negatives.rows());
  logits(0) = q.dot(k_pos) / tau;
  if (negatives.rows() > 0) logits.tail(negatives.rows()) = negatives * q / tau;
  return logits;
}

}  // namespace

double info_nce(const Vec& q, const Vec& k_pos, const Mat& negatives, double tau) {
  return softmax_xent(nce_logits(q, k_pos, negatives, tau), 0, nullptr);
}

InfoNceGrad info_nce_grad(const Vec& q, const Vec& k_pos, const Mat& negatives, double tau) {
  Vec dl;
  InfoNceGrad out;
  out.loss = softmax_xent(nce_logits(q, k_pos, negatives, tau), 0, &dl);
  out.d_q = dl(0) * k_pos / tau;
  if (negatives.rows() > 0) out.d_q += negatives.transpose() * dl.tail(negatives.rows()) / tau;
  out.d_k = dl(0) * q / tau;
  return out;
}

BatchLoss batch_info_nce(const Mat& q, const Mat& k, const Mat& negatives, double tau) {
  check_tau(tau);
  check_dim(q.rows(), k.rows(), "batch_info_nce batch");
  check_dim(q.cols(), k.cols(), "batch_info_nce features");
  if (q.rows() == 0) throw std::invalid_argument("batch_info_nce: empty batch");
  if (negatives.rows() > 0) check_dim(negatives.cols(), q.cols(), "batch_info_nce negatives");
  const Eigen::Index n = q.rows();
  const Eigen::Index kneg = negatives.rows();
  Mat logits(n, 1 + kneg);
  logits.col(0) = (q.array() * k.array()).rowwise().sum().matrix() / tau;
  if (kneg > 0) logits.rightCols(kneg) = q * negatives.transpose() / tau;

  BatchLoss out;
  Mat dlog(n, 1 + kneg);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec d;
    out.loss += softmax_xent(logits.row(i).transpose(), 0, &d);
    dlog.row(i) = d.transpose();
  }
  out.loss /= static_cast<double>(n);
  dlog /= static_cast<double>(n) * tau;
  out.d_q = dlog.col(0).asDiagonal() * k;
  if (kneg > 0) out.d_q += dlog.rightCols(kneg) * negatives;
  return out;
}

Mat normalize_rows(const Mat& z) {
  Mat u = z;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double nrm = z.row(i).norm();
    if (nrm <= 0 || !std::isfinite(nrm)) throw std::runtime_error("cannot normalize a zero or non-finite feature");
    u.row(i) /= nrm;
  }
  return u;
}

Mat normalize_rows_backward(const Mat& z, const Mat& d_unit) {
  Mat dz(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double nrm = z.row(i).norm();
    const Eigen::RowVectorXd u = z.row(i) / nrm;
    dz.row(i) = (d_unit.row(i) - u * u.dot(d_unit.row(i))) / nrm;
  }
  return dz;
}

bool rows_unit_norm(const Mat& z, double tol) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (std::abs(z.row(i).norm() - 1.0) > tol) return false;
  }
  return true;
}

}  // namespace aerossl
