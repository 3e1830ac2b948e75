#include <doctest.h>

#include <filesystem>
#include <random>

#include "aerossl/contrastive.hpp"
#include "aerossl/eval.hpp"
#include "checks.hpp"

using namespace aerossl;
namespace fs = std::filesystem;

namespace {

// Two Gaussian classes around +-offset along the first axis.
void blobs(std::mt19937_64& rng, int per_class, int dim, double offset, Mat& x, std::vector<int>& y) {
  std::normal_distribution<double> g(0.0, 1.0);
  x.resize(2 * per_class, dim);
  y.clear();
  for (int i = 0; i < 2 * per_class; ++i) {
    const int label = i % 2;
    for (int j = 0; j < dim; ++j) x(i, j) = g(rng);
    x(i, 0) += label == kForegroundClass ? offset : -offset;
    y.push_back(label);
  }
}

Encoder<float> small_encoder(std::uint64_t seed) {
  BackboneSpec spec;
  spec.widths = {4, 4, 8, 8};
  spec.norm_groups = 2;
  return build_encoder(spec, HeadSpec{12, 6}, seed).query;
}

LabeledSet random_set(std::mt19937_64& rng, int n, int side) {
  std::uniform_int_distribution<int> u(0, 255);
  LabeledSet s;
  for (int i = 0; i < n; ++i) {
    Image8 img(side, side);
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(u(rng));
    s.images.push_back(img);
    s.labels.push_back(i % 2);
    s.ids.push_back("p" + std::to_string(i));
  }
  return s;
}

}  // namespace

TEST_CASE("classification metrics") {
  SUBCASE("worked example") {
    const Metrics m = compute_metrics({1, 1, 0, 0, 1}, {1, 0, 0, 1, 1});
    CHECK(m.tp == 2);
    CHECK(m.fp == 1);
    CHECK(m.fn == 1);
    CHECK(m.tn == 1);
    CHECK(m.top1 == doctest::Approx(60.0));
    CHECK(m.precision_fg == doctest::Approx(200.0 / 3.0));
    CHECK(m.recall_fg == doctest::Approx(200.0 / 3.0));
    CHECK_FALSE(m.precision_undefined);
  }
  SUBCASE("no foreground predictions") {
    const Metrics m = compute_metrics({0, 0, 0}, {1, 0, 0});
    CHECK(m.precision_undefined);
    CHECK(m.precision_fg == 0.0);
    CHECK(m.recall_fg == 0.0);
    CHECK(m.top1 == doctest::Approx(200.0 / 3.0));
  }
  SUBCASE("confusion counts recount the inputs") {
    std::mt19937_64 rng(1);
    for (int it = 0; it < 50; ++it) {
      const int n = 1 + static_cast<int>(rng() % 40);
      std::vector<int> p(static_cast<std::size_t>(n)), l(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        p[static_cast<std::size_t>(i)] = static_cast<int>(rng() % 2);
        l[static_cast<std::size_t>(i)] = static_cast<int>(rng() % 2);
      }
      const Metrics m = compute_metrics(p, l);
      CHECK(m.tp + m.fp + m.fn + m.tn == n);
      long agree = 0;
      for (int i = 0; i < n; ++i) agree += p[static_cast<std::size_t>(i)] == l[static_cast<std::size_t>(i)];
      CHECK(m.top1 == doctest::Approx(100.0 * agree / n));
    }
  }
  SUBCASE("bad inputs") {
    CHECK_THROWS(compute_metrics({1}, {1, 0}));
    CHECK_THROWS(compute_metrics({}, {}));
  }
}

TEST_CASE("linear probe") {
  std::mt19937_64 rng(2);
  ProbeConfig cfg;
  cfg.epochs = 30;
  cfg.batch = 32;
  SUBCASE("separable classes are classified perfectly") {
    Mat tx, vx;
    std::vector<int> ty, vy;
    blobs(rng, 60, 8, 6.0, tx, ty);
    blobs(rng, 40, 8, 6.0, vx, vy);
    for (const std::string norm : {"none", "l2", "standardize"}) {
      CAPTURE(norm);
      cfg.feature_norm = norm;
      cfg.lr = norm == "none" ? 0.5 : 30.0;
      const ProbeResult r = linear_probe(tx, ty, vx, vy, cfg, 0.1);
      CHECK(r.metrics.top1 == 100.0);
      CHECK(r.mode == "frozen");
      CHECK(r.label_fraction == 0.1);
    }
  }
  SUBCASE("constant features carry no signal") {
    const Mat tx = Mat::Ones(20, 4), vx = Mat::Ones(10, 4);
    std::vector<int> ty, vy;
    for (int i = 0; i < 20; ++i) ty.push_back(i % 2);
    for (int i = 0; i < 10; ++i) vy.push_back(i % 2);
    const ProbeResult r = linear_probe(tx, ty, vx, vy, cfg, 1.0);
    CHECK(r.metrics.top1 == 50.0);
    for (int p : r.predictions) CHECK(p == r.predictions.front());
  }
  SUBCASE("standardized probe ignores feature scale") {
    Mat tx, vx;
    std::vector<int> ty, vy;
    blobs(rng, 30, 5, 1.0, tx, ty);
    blobs(rng, 30, 5, 1.0, vx, vy);
    cfg.feature_norm = "standardize";
    const ProbeResult a = linear_probe(tx, ty, vx, vy, cfg, 1.0);
    const ProbeResult b = linear_probe(tx * 1000.0, ty, vx * 1000.0, vy, cfg, 1.0);
    CHECK(a.predictions == b.predictions);
  }
  SUBCASE("deterministic by seed") {
    Mat tx, vx;
    std::vector<int> ty, vy;
    blobs(rng, 30, 5, 0.5, tx, ty);
    blobs(rng, 30, 5, 0.5, vx, vy);
    CHECK(linear_probe(tx, ty, vx, vy, cfg, 1.0).predictions == linear_probe(tx, ty, vx, vy, cfg, 1.0).predictions);
  }
  SUBCASE("invalid inputs") {
    const Mat x = Mat::Ones(4, 3);
    CHECK_THROWS(linear_probe(x, {0, 0, 0, 0}, x, {0, 1, 0, 1}, cfg, 1.0));
    CHECK_THROWS(linear_probe(x, {0, 1, 0}, x, {0, 1, 0, 1}, cfg, 1.0));
    CHECK_THROWS(linear_probe(x, {0, 1, 0, 1}, Mat::Ones(4, 2), {0, 1, 0, 1}, cfg, 1.0));
    cfg.feature_norm = "max";
    CHECK_THROWS(linear_probe(x, {0, 1, 0, 1}, x, {0, 1, 0, 1}, cfg, 1.0));
  }
}

TEST_CASE("evaluation crops and features") {
  std::mt19937_64 rng(3);
  const LabeledSet s = random_set(rng, 5, 14);
  SUBCASE("center crops") {
    const auto c = make_crops(s.images, 10, false, 0);
    REQUIRE(c.size() == 5);
    CHECK(c[0] == to_float(crop(s.images[0], 2, 2, 10, 10)));
  }
  SUBCASE("random crops stay inside and repeat by seed") {
    const auto a = make_crops(s.images, 10, true, 4), b = make_crops(s.images, 10, true, 4);
    CHECK(a == b);
    for (const auto& c : a) CHECK(c.width() == 10);
  }
  SUBCASE("too small") { CHECK_THROWS_WITH(make_crops(s.images, 15, false, 0), doctest::Contains("15")); }
  SUBCASE("features do not depend on the batch split") {
    auto enc = small_encoder(5);
    const auto crops = make_crops(s.images, 12, false, 0);
    const Mat a = extract_features(enc, crops, InputNorm{}, 64);
    const Mat b = extract_features(enc, crops, InputNorm{}, 2);
    CHECK(a.rows() == 5);
    CHECK(a.cols() == enc.feature_dim());
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("end-to-end finetuning") {
  std::mt19937_64 rng(4);
  const LabeledSet train = random_set(rng, 8, 14), val = random_set(rng, 6, 14);
  const Encoder<float> source = small_encoder(6);
  std::vector<std::vector<float>> before;
  for (auto* p : const_cast<Encoder<float>&>(source).parameters()) before.push_back(p->value);
  FinetuneConfig cfg;
  cfg.crop = 12;
  cfg.batch = 4;
  SUBCASE("zero epochs predicts with the initial head") {
    cfg.epochs = 0;
    const ProbeResult r = finetune_end_to_end(source, train, val, InputNorm{}, cfg, 1.0);
    CHECK(r.mode == "end_to_end");
    REQUIRE(r.predictions.size() == 6);
    nn::Linear<float> head(source.feature_dim(), 2, "classifier");
    Rng init = make_rng(cfg.seed, {0});
    head.reset_parameters(init);
    Encoder<float> enc(source);
    const Mat f = extract_features(enc, make_crops(val.images, 12, false, 0), InputNorm{});
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      double l[2];
      for (int c = 0; c < 2; ++c) {
        l[c] = head.bias().value[static_cast<std::size_t>(c)];
        for (Eigen::Index j = 0; j < f.cols(); ++j)
          l[c] += static_cast<double>(head.weight().value[static_cast<std::size_t>(c * f.cols() + j)]) * f(i, j);
      }
      CHECK(r.predictions[static_cast<std::size_t>(i)] == (l[1] > l[0] ? kForegroundClass : kBackgroundClass));
    }
  }
  SUBCASE("training leaves the caller's encoder untouched") {
    cfg.epochs = 2;
    const ProbeResult a = finetune_end_to_end(source, train, val, InputNorm{}, cfg, 0.5);
    const ProbeResult b = finetune_end_to_end(source, train, val, InputNorm{}, cfg, 0.5);
    CHECK(a.predictions == b.predictions);
    CHECK(a.label_fraction == 0.5);
    auto params = const_cast<Encoder<float>&>(source).parameters();
    for (std::size_t i = 0; i < params.size(); ++i) CHECK(params[i]->value == before[i]);
  }
}

TEST_CASE("result files") {
  const fs::path dir = fs::temp_directory_path() / "aerossl_test_eval";
  fs::remove_all(dir);
  fs::create_directories(dir);
  ProbeResult r;
  r.mode = "frozen";
  r.label_fraction = 0.1;
  r.metrics = compute_metrics({1, 0, 1, 1}, {1, 0, 0, 1});
  const std::string path = (dir / "results.csv").string();
  append_results_csv(path, "run_a", r);
  r.mode = "end_to_end";
  append_results_csv(path, "run_b", r);
  const auto rows = read_results_csv(path);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].run_id == "run_a");
  CHECK(rows[1].mode == "end_to_end");
  CHECK(rows[0].fraction == 0.1);
  CHECK(rows[0].top1 == doctest::Approx(75.0));
  CHECK(rows[0].prec_fg == doctest::Approx(66.6667).epsilon(1e-5));
  CHECK(rows[0].rec_fg == doctest::Approx(100.0));
  CHECK(checks::read_file(path).rfind("run_id,mode,fraction,top1,prec_fg,rec_fg\n", 0) == 0);

  LabeledSet s;
  s.ids = {"a", "b"};
  s.labels = {kForegroundClass, kBackgroundClass};
  write_predictions_csv((dir / "pred.csv").string(), s, {kBackgroundClass, kBackgroundClass});
  CHECK(checks::read_file((dir / "pred.csv").string()) ==
        "patch_id,label,prediction\na,foreground,background\nb,background,background\n");
  CHECK_THROWS(write_predictions_csv((dir / "x.csv").string(), s, {0}));
  CHECK_THROWS(read_results_csv((dir / "pred.csv").string()));
  fs::remove_all(dir);
}

TEST_CASE("downstream loading") {
  SynthConfig sc;
  sc.frames = 20;
  sc.width = sc.height = 200;
  sc.seed = 3;
  sc.blob_density = 40;
  const auto frames = synth_generate(sc);
  DownstreamSetOptions o;
  o.fg_size = 20;
  o.bg_size = 24;
  o.bg_per_fg = 2;
  const DatasetManifest m = build_downstream_set(frames, o);
  const DownstreamData full = load_downstream(m, frames, 1.0, 1);
  const DownstreamData tenth = load_downstream(m, frames, 0.1, 1);
  int fg = 0;
  for (int l : full.train.labels) fg += l == kForegroundClass;
  const int bg = static_cast<int>(full.train.labels.size()) - fg;
  int fg10 = 0;
  for (int l : tenth.train.labels) fg10 += l == kForegroundClass;
  CHECK(fg10 == (fg + 9) / 10);
  CHECK(static_cast<int>(tenth.train.labels.size()) - fg10 == (bg + 9) / 10);
  CHECK(tenth.val.labels == full.val.labels);
  CHECK(tenth.test.ids == full.test.ids);
  CHECK(full.train.images.size() == full.train.ids.size());
  CHECK_THROWS(load_downstream(build_pretrain_set(frames, {}), frames, 1.0, 1));
}
