#include <benchmark/benchmark.h>

#include <random>

#include "aerossl/augment.hpp"
#include "aerossl/cld.hpp"
#include "aerossl/contrastive.hpp"
#include "aerossl/infonce.hpp"

using namespace aerossl;

namespace {

Mat unit_rows(std::mt19937_64& rng, int n, int dim) {
  std::normal_distribution<double> g;
  Mat m(n, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return normalize_rows(m);
}

std::vector<ImageF> random_images(int n, int side) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 255.0f);
  std::vector<ImageF> out;
  for (int i = 0; i < n; ++i) {
    ImageF img(side, side);
    for (float& v : img.data()) v = u(rng);
    out.push_back(img);
  }
  return out;
}

BackboneSpec desk_backbone() {
  BackboneSpec b;
  b.id = "desk_cnn";
  b.widths = {16, 32, 64, 128};
  return b;
}

void BM_InfoNceBatch(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const int n = 64, dim = 128, k = static_cast<int>(state.range(0));
  const Mat q = unit_rows(rng, n, dim), pos = unit_rows(rng, n, dim), neg = unit_rows(rng, k, dim);
  for (auto _ : state) benchmark::DoNotOptimize(batch_info_nce(q, pos, neg, 0.2).loss);
}
BENCHMARK(BM_InfoNceBatch)->Arg(256)->Arg(4096);

void BM_LocalKmeans(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const Mat x = unit_rows(rng, 64, 128);
  const int k = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(local_kmeans(x, k, 10, 7).inertia);
}
BENCHMARK(BM_LocalKmeans)->Arg(8)->Arg(32);

void BM_MakeViews(benchmark::State& state) {
  const Image8 patch = to_u8(random_images(1, 64).front());
  AugPolicy policy;
  policy.crop_size = 48;
  policy.blur_kernel = 5;
  policy.blur_sigma_max = 0.5;
  const auto strategy = static_cast<ViewStrategy>(state.range(0));
  Rng rng = make_rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(make_views(patch, strategy, policy, rng).key);
  state.SetLabel(to_string(strategy));
}
BENCHMARK(BM_MakeViews)->DenseRange(0, 4);

void BM_EncoderForwardBackward(benchmark::State& state) {
  EncoderState<float> enc = build_encoder(desk_backbone(), HeadSpec{256, 128}, 5);
  const int batch = static_cast<int>(state.range(0));
  const auto imgs = random_images(batch, 48);
  std::vector<const ImageF*> ptrs;
  for (const auto& i : imgs) ptrs.push_back(&i);
  const auto x = images_to_tensor<float>(ptrs, InputNorm{});
  for (auto _ : state) {
    const auto out = enc.query.forward(x, false);
    nn::Tensor<float> d = out.inst;
    enc.query.backward(&d, nullptr);
    enc.query.zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_EncoderForwardBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
