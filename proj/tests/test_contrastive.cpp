#include <doctest.h>

#include <cmath>
#include <random>

#include "aerossl/contrastive.hpp"
#include "checks.hpp"
#include "oracles.hpp"

using namespace aerossl;

namespace {

Mat unit_rows(std::mt19937_64& rng, int n, int dim) { return oracle::to_mat(oracle::random_unit_rows(rng, n, dim)); }

EncoderState<double> small_state(std::uint64_t seed) {
  BackboneSpec spec;
  spec.widths = {4, 4, 8, 8};
  spec.norm_groups = 2;
  Encoder<double> q(spec, HeadSpec{12, 6});
  Rng rng = make_rng(seed);
  q.reset_parameters(rng);
  return EncoderState<double>(std::move(q));
}

std::vector<ImageF> images(std::mt19937_64& rng, int n, int side) {
  std::uniform_real_distribution<float> u(0.0f, 255.0f);
  std::vector<ImageF> out;
  for (int i = 0; i < n; ++i) {
    ImageF img(side, side);
    for (float& v : img.data()) v = u(rng);
    out.push_back(img);
  }
  return out;
}

std::vector<const ImageF*> ptrs(const std::vector<ImageF>& v) {
  std::vector<const ImageF*> out;
  for (const auto& x : v) out.push_back(&x);
  return out;
}

// Query projections, normalized row by row with plain loops.
oracle::Rows query_embeddings(Encoder<double>& enc, const std::vector<ImageF>& imgs, const InputNorm& norm) {
  const auto out = enc.forward(images_to_tensor<double>(ptrs(imgs), norm), false);
  oracle::Rows rows = oracle::to_rows(tensor_to_mat(out.inst));
  for (auto& r : rows) {
    const double n = std::sqrt(oracle::dot(r, r));
    for (double& v : r) v /= n;
  }
  return rows;
}

}  // namespace

TEST_CASE("queue examples") {
  std::mt19937_64 rng(1);
  const Mat x = unit_rows(rng, 6, 3);
  SUBCASE("FIFO replacement keeps the oldest first") {
    FeatureQueue q(4, 3);
    q.push(x.middleRows(0, 2));
    CHECK(q.size() == 2);
    CHECK(q.contents() == x.middleRows(0, 2));
    q.push(x.middleRows(2, 2));
    q.push(x.middleRows(4, 2));
    CHECK(q.full());
    CHECK(q.capacity() == 4);
    CHECK(q.contents() == x.middleRows(2, 4));
  }
  SUBCASE("push of full capacity replaces everything") {
    FeatureQueue q(4, 3);
    q.push(x.middleRows(0, 3));
    q.push(x.middleRows(2, 4));
    CHECK(q.contents() == x.middleRows(2, 4));
  }
  SUBCASE("invalid pushes") {
    FeatureQueue q(4, 3);
    CHECK_THROWS(q.push(unit_rows(rng, 5, 3)));
    CHECK_THROWS(q.push(unit_rows(rng, 2, 4)));
    CHECK_THROWS(q.push(x.topRows(2) * 2.0));
    CHECK(q.size() == 0);
    CHECK_THROWS(FeatureQueue(0, 3));
  }
  SUBCASE("restore round-trips") {
    FeatureQueue q(4, 3), r(4, 3);
    q.push(x.topRows(5).bottomRows(3));
    q.push(x.bottomRows(2));
    r.restore(q.storage(), q.size(), q.write_ptr());
    CHECK(r.contents() == q.contents());
    CHECK_THROWS(r.restore(q.storage(), 5, 0));
  }
}

TEST_CASE("momentum update") {
  auto make = [](double v) {
    nn::Parameter<double> p;
    p.name = "w";
    p.value = {v, v};
    p.grad = {0, 0};
    return p;
  };
  SUBCASE("zero momentum copies the query") {
    auto q = make(1.5), k = make(-2.0);
    momentum_update<double>({&q}, {&k}, 0.0);
    CHECK(k.value == q.value);
  }
  SUBCASE("scalar blend") {
    auto q = make(1.0), k = make(0.0);
    momentum_update<double>({&q}, {&k}, 0.999);
    CHECK(k.value[0] == doctest::Approx(0.001).epsilon(1e-12));
  }
  SUBCASE("equal parameters are a fixed point") {
    auto q = make(0.37), k = make(0.37);
    momentum_update<double>({&q}, {&k}, 0.9);
    CHECK(k.value[0] == doctest::Approx(0.37).epsilon(1e-15));
  }
  SUBCASE("out of range and mismatched shapes are rejected") {
    auto q = make(1.0), k = make(0.0);
    CHECK_THROWS(momentum_update<double>({&q}, {&k}, 1.0));
    CHECK_THROWS(momentum_update<double>({&q}, {&k}, -0.1));
    k.value.push_back(0);
    CHECK_THROWS(momentum_update<double>({&q}, {&k}, 0.5));
  }
}

TEST_CASE("contrastive step") {
  std::mt19937_64 rng(2);
  const InputNorm norm;
  SUBCASE("loss matches an independent recomputation on a two-sample batch") {
    auto state = small_state(3);
    FeatureQueue queue(5, 6);
    queue.push(unit_rows(rng, 3, 6));
    const auto q_imgs = images(rng, 2, 8), k_imgs = images(rng, 2, 8);
    const oracle::Rows q = query_embeddings(state.query, q_imgs, norm);
    const oracle::Rows k = oracle::to_rows(encode_keys(state.key, ptrs(k_imgs), norm));
    const oracle::Rows negs = oracle::to_rows(queue.contents());
    BasicSgd<double> opt(0.9, 1e-4);
    StepOptions so;
    so.lr = 0.1;
    so.tau_q = 0.2;
    so.norm = norm;
    const StepResult r = contrastive_step<double>({ptrs(q_imgs)}, ptrs(k_imgs), LossPlan{}, state, queue, opt, so);
    CHECK(std::abs(r.loss - oracle::batch_info_nce(q, k, negs, 0.2)) < 1e-10);
    // Keys were enqueued after the loss.
    CHECK(queue.size() == 5);
    const oracle::Rows after = oracle::to_rows(queue.contents());
    for (std::size_t j = 0; j < 6; ++j) CHECK(after[3][j] == doctest::Approx(k[0][j]).epsilon(1e-12));
  }
  SUBCASE("identical views with their own keys queued beat uniform logits") {
    auto state = small_state(4);
    const auto imgs = images(rng, 4, 8);
    FeatureQueue queue(4, 6);
    queue.push(encode_keys(state.key, ptrs(imgs), norm));
    BasicSgd<double> opt;
    StepOptions so;
    so.lr = 0.0;
    so.norm = norm;
    const StepResult r = contrastive_step<double>({ptrs(imgs)}, ptrs(imgs), LossPlan{}, state, queue, opt, so);
    CHECK(r.loss < std::log(1.0 + 4.0));
    // Positive logit is exactly 1/tau: query and key encoders agree at init.
    const oracle::Rows q = query_embeddings(state.query, imgs, norm);
    const oracle::Rows k = oracle::to_rows(encode_keys(state.key, ptrs(imgs), norm));
    for (std::size_t i = 0; i < q.size(); ++i) CHECK(oracle::dot(q[i], k[i]) / so.tau_q == doctest::Approx(5.0));
  }
  SUBCASE("zero learning rate leaves both encoders unchanged") {
    auto state = small_state(5);
    std::vector<std::vector<double>> before;
    for (auto* p : state.query.parameters()) before.push_back(p->value);
    FeatureQueue queue(8, 6);
    const auto a = images(rng, 3, 8), b = images(rng, 3, 8);
    BasicSgd<double> opt(0.9, 0.0);
    StepOptions so;
    so.lr = 0.0;
    contrastive_step<double>({ptrs(a)}, ptrs(b), LossPlan{}, state, queue, opt, so);
    auto qp = state.query.parameters(), kp = state.key.parameters();
    for (std::size_t i = 0; i < qp.size(); ++i) {
      CHECK(qp[i]->value == before[i]);
      CHECK(kp[i]->value == before[i]);
    }
  }
  SUBCASE("key parameters stay inside the envelope of both histories") {
    auto state = small_state(6);
    auto qp = state.query.parameters(), kp = state.key.parameters();
    std::vector<std::vector<double>> lo, hi;
    for (auto* p : qp) {
      lo.push_back(p->value);
      hi.push_back(p->value);
    }
    FeatureQueue queue(12, 6);
    BasicSgd<double> opt(0.9, 1e-4);
    StepOptions so;
    so.lr = 0.5;
    so.momentum = 0.9;
    int outside = 0;
    for (int step = 0; step < 8; ++step) {
      const auto a = images(rng, 3, 8), b = images(rng, 3, 8);
      contrastive_step<double>({ptrs(a)}, ptrs(b), LossPlan{}, state, queue, opt, so);
      for (std::size_t i = 0; i < qp.size(); ++i) {
        for (std::size_t j = 0; j < qp[i]->value.size(); ++j) {
          lo[i][j] = std::min(lo[i][j], qp[i]->value[j]);
          hi[i][j] = std::max(hi[i][j], qp[i]->value[j]);
          const double kv = kp[i]->value[j];
          if (kv < lo[i][j] - 1e-12 || kv > hi[i][j] + 1e-12) ++outside;
        }
      }
    }
    CHECK(outside == 0);
  }
  SUBCASE("emitted embeddings are unit norm") {
    auto state = small_state(7);
    const auto imgs = images(rng, 5, 8);
    CHECK(rows_unit_norm(encode_keys(state.key, ptrs(imgs), norm), 1e-6));
  }
}

TEST_CASE("queue and momentum mechanics suite") {
  const auto v = checks::moco_mechanics(1000, 50, 8);
  CHECK_MESSAGE(v.pass, v.detail);
}
