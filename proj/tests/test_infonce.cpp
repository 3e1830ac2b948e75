#include <doctest.h>

#include <cmath>
#include <random>

#include "aerossl/infonce.hpp"
#include "checks.hpp"
#include "oracles.hpp"

using namespace aerossl;

namespace {

Vec unit(int dim, int axis, double sign = 1.0) {
  Vec v = Vec::Zero(dim);
  v(axis) = sign;
  return v;
}

Vec random_unit(std::mt19937_64& rng, int dim) { return oracle::to_mat(oracle::random_unit_rows(rng, 1, dim)).row(0).transpose(); }

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

}  // namespace

TEST_CASE("cosine scores") {
  const Vec q = unit(4, 0);
  Mat keys(3, 4);
  keys.row(0) = unit(4, 0).transpose();
  keys.row(1) = unit(4, 0, -1).transpose();
  keys.row(2) = unit(4, 1).transpose();
  const Vec s = cosine_scores(q, keys);
  CHECK(s(0) == 1.0);
  CHECK(s(1) == -1.0);
  CHECK(s(2) == 0.0);
  CHECK_THROWS(cosine_scores(unit(3, 0), keys));
}

TEST_CASE("info_nce values") {
  SUBCASE("no negatives gives zero") {
    std::mt19937_64 rng(1);
    const Vec q = random_unit(rng, 8);
    for (double tau : {0.07, 0.2, 1.0, 5.0}) CHECK(info_nce(q, q, Mat(0, 8), tau) == doctest::Approx(0.0));
  }
  SUBCASE("one orthogonal negative at unit temperature") {
    Mat neg(1, 3);
    neg.row(0) = unit(3, 1).transpose();
    const double expect = std::log(1.0 + std::exp(-1.0));
    CHECK(expect == doctest::Approx(0.31326).epsilon(1e-5));
    CHECK(std::abs(info_nce(unit(3, 0), unit(3, 0), neg, 1.0) - expect) < 1e-14);
  }
  SUBCASE("random inputs match the oracle") {
    std::mt19937_64 rng(2);
    for (int it = 0; it < 200; ++it) {
      const int dim = 2 + static_cast<int>(rng() % 30), K = static_cast<int>(rng() % 50);
      const double tau = 0.05 + 2.0 * std::uniform_real_distribution<double>(0, 1)(rng);
      const auto q = oracle::random_unit_rows(rng, 1, dim)[0], k = oracle::random_unit_rows(rng, 1, dim)[0];
      const auto negs = oracle::random_unit_rows(rng, K, dim);
      const Mat nm = K ? oracle::to_mat(negs) : Mat(0, dim);
      const double got = info_nce(oracle::to_mat({q}).row(0).transpose(), oracle::to_mat({k}).row(0).transpose(), nm, tau);
      CHECK(std::abs(got - oracle::info_nce(q, k, negs, tau)) < 1e-10);
    }
  }
  SUBCASE("extreme temperatures stay finite") {
    std::mt19937_64 rng(3);
    const Vec q = random_unit(rng, 16);
    const Mat neg = oracle::to_mat(oracle::random_unit_rows(rng, 100, 16));
    for (double tau : {1e-3, 1e3}) CHECK(std::isfinite(info_nce(q, random_unit(rng, 16), neg, tau)));
  }
}

TEST_CASE("lower temperature sharpens a correct ranking") {
  std::mt19937_64 rng(4);
  for (int it = 0; it < 20; ++it) {
    const Vec q = random_unit(rng, 12);
    Mat neg = oracle::to_mat(oracle::random_unit_rows(rng, 30, 12));
    // Keep every negative strictly below the positive logit.
    for (Eigen::Index r = 0; r < neg.rows(); ++r)
      if (neg.row(r).dot(q) > 0.5) neg.row(r) = -neg.row(r);
    double prev = info_nce(q, q, neg, 2.0);
    for (double tau : {1.0, 0.5, 0.2, 0.1, 0.05}) {
      const double cur = info_nce(q, q, neg, tau);
      CHECK(cur < prev);
      prev = cur;
    }
  }
}

TEST_CASE("analytic gradients") {
  std::mt19937_64 rng(5);
  const double h = 1e-6;
  SUBCASE("info_nce wrt query and positive on a 16-dim head") {
    for (int it = 0; it < 20; ++it) {
      // Unnormalized inputs are fine for the raw loss; the gradient is of the plain expression.
      const Vec q = random_unit(rng, 16), k = random_unit(rng, 16);
      const Mat neg = oracle::to_mat(oracle::random_unit_rows(rng, 10, 16));
      const double tau = 0.2 + 0.1 * it;
      const InfoNceGrad g = info_nce_grad(q, k, neg, tau);
      CHECK(g.loss == doctest::Approx(info_nce(q, k, neg, tau)));
      for (int j = 0; j < 16; ++j) {
        Vec a = q, b = q;
        a(j) += h;
        b(j) -= h;
        CHECK(rel_err(g.d_q(j), (info_nce(a, k, neg, tau) - info_nce(b, k, neg, tau)) / (2 * h)) < 1e-4);
        Vec c = k, d = k;
        c(j) += h;
        d(j) -= h;
        CHECK(rel_err(g.d_k(j), (info_nce(q, c, neg, tau) - info_nce(q, d, neg, tau)) / (2 * h)) < 1e-4);
      }
    }
  }
  SUBCASE("batch loss wrt the query rows") {
    const Mat q = oracle::to_mat(oracle::random_unit_rows(rng, 5, 8));
    const Mat k = oracle::to_mat(oracle::random_unit_rows(rng, 5, 8));
    const Mat neg = oracle::to_mat(oracle::random_unit_rows(rng, 7, 8));
    const BatchLoss b = batch_info_nce(q, k, neg, 0.3);
    CHECK(std::abs(b.loss - oracle::batch_info_nce(oracle::to_rows(q), oracle::to_rows(k), oracle::to_rows(neg), 0.3)) < 1e-12);
    for (Eigen::Index i = 0; i < q.rows(); ++i)
      for (Eigen::Index j = 0; j < q.cols(); ++j) {
        Mat a = q, c = q;
        a(i, j) += h;
        c(i, j) -= h;
        const double fd = (batch_info_nce(a, k, neg, 0.3).loss - batch_info_nce(c, k, neg, 0.3).loss) / (2 * h);
        CHECK(rel_err(b.d_q(i, j), fd) < 1e-4);
      }
  }
  SUBCASE("softmax cross-entropy") {
    Vec logits(5);
    logits << 0.3, -1.2, 2.0, 0.0, 0.7;
    Vec d;
    const double l = softmax_xent(logits, 2, &d);
    CHECK(std::abs(l - oracle::softmax_xent(oracle::to_row(logits), 2)) < 1e-14);
    CHECK(d.sum() == doctest::Approx(0.0).epsilon(1e-12));
    for (int j = 0; j < 5; ++j) {
      Vec a = logits, b = logits;
      a(j) += h;
      b(j) -= h;
      CHECK(rel_err(d(j), (softmax_xent(a, 2, nullptr) - softmax_xent(b, 2, nullptr)) / (2 * h)) < 1e-6);
    }
  }
  SUBCASE("row normalization backward") {
    const Mat z = Mat::Random(4, 6) * 3.0;
    const Mat w = Mat::Random(4, 6);
    const Mat dz = normalize_rows_backward(z, w);
    for (Eigen::Index i = 0; i < z.rows(); ++i)
      for (Eigen::Index j = 0; j < z.cols(); ++j) {
        Mat a = z, b = z;
        a(i, j) += h;
        b(i, j) -= h;
        const double fd = (normalize_rows(a).cwiseProduct(w).sum() - normalize_rows(b).cwiseProduct(w).sum()) / (2 * h);
        CHECK(rel_err(dz(i, j), fd) < 1e-5);
      }
    CHECK(rows_unit_norm(normalize_rows(z)));
    CHECK_FALSE(rows_unit_norm(z));
  }
}

TEST_CASE("shared loss oracle suite") {
  const auto v = checks::loss_oracles(100, 77);
  CHECK_MESSAGE(v.pass, v.detail);
}
