#include <doctest.h>

#include <cmath>
#include <random>

#include "aerossl/augment.hpp"

using namespace aerossl;

namespace {

ImageF random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 255.0f);
  ImageF img(w, h);
  for (float& v : img.data()) v = u(rng);
  return img;
}

Image8 random_patch(int size, std::uint64_t seed) { return to_u8(random_image(size, size, seed)); }

// Quarter turn counter-clockwise written directly from the row/column swap.
ImageF quarter_turn(const ImageF& img) {
  const int n = img.width();
  ImageF out(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(n - 1 - y, x, c);
  return out;
}

double pixel_sum(const ImageF& img) {
  double s = 0;
  for (float v : img.data()) s += v;
  return s;
}

double max_abs_diff(const ImageF& a, const ImageF& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(double(a.data()[i]) - b.data()[i]));
  return m;
}

AugPolicy small_policy() {
  AugPolicy p;
  p.crop_size = 24;
  p.blur_kernel = 5;
  return p;
}

}  // namespace

TEST_CASE("base augmentation") {
  const AugPolicy policy;
  SUBCASE("input of exactly the crop size is cropped at the origin") {
    const ImageF img = random_image(224, 224, 1);
    Rng rng(3);
    for (int i = 0; i < 10; ++i) {
      BaseParams p;
      const ImageF out = base_aug(img, policy, rng, &p);
      CHECK(p.crop_x == 0);
      CHECK(p.crop_y == 0);
      CHECK(out.width() == 224);
      CHECK(out.height() == 224);
    }
  }
  SUBCASE("crop without resize copies the window") {
    const ImageF img = random_image(40, 30, 2);
    AugPolicy p = small_policy();
    BaseParams b{5, 3, false, false, 0.0};
    const ImageF out = apply_base(img, b, p);
    CHECK(out.at(0, 0, 1) == img.at(5, 3, 1));
    CHECK(out.at(23, 23, 2) == img.at(28, 26, 2));
  }
  SUBCASE("flip is an involution") {
    const ImageF img = random_image(17, 9, 3);
    CHECK(hflip(hflip(img)) == img);
    CHECK(hflip(img).at(0, 4, 0) == img.at(16, 4, 0));
  }
  SUBCASE("blur leaves a constant field unchanged") {
    const ImageF flat(32, 32, 117.0f);
    for (double sigma : {0.1, 1.0, 2.0}) CHECK(max_abs_diff(gaussian_blur(flat, sigma, 23), flat) < 1e-4);
  }
  SUBCASE("blur reduces pixel variance") {
    const ImageF img = random_image(32, 32, 4);
    const ImageF out = gaussian_blur(img, 2.0, 23);
    double var_in = 0, var_out = 0, mean = pixel_sum(img) / img.data().size();
    for (std::size_t i = 0; i < img.data().size(); ++i) {
      var_in += std::pow(img.data()[i] - mean, 2);
      var_out += std::pow(out.data()[i] - mean, 2);
    }
    CHECK(var_out < var_in);
  }
  SUBCASE("undersized input names the minimum") {
    Rng rng(5);
    try {
      base_aug(random_image(100, 300, 5), policy, rng);
      FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("224") != std::string::npos);
    }
  }
  SUBCASE("sampled parameters stay in range") {
    Rng rng(6);
    int flips = 0, blurs = 0;
    for (int i = 0; i < 2000; ++i) {
      const BaseParams p = sample_base(policy, 256, 256, rng);
      CHECK(p.crop_x >= 0);
      CHECK(p.crop_x <= 32);
      if (p.blur) {
        CHECK(p.sigma >= 0.1);
        CHECK(p.sigma <= 2.0);
      }
      flips += p.flip;
      blurs += p.blur;
    }
    CHECK(flips / 2000.0 == doctest::Approx(0.5).epsilon(0.1));
    CHECK(blurs / 2000.0 == doctest::Approx(0.5).epsilon(0.1));
  }
}

TEST_CASE("color augmentation") {
  const ImageF img = random_image(12, 12, 7);
  SUBCASE("identity factors leave the image unchanged") {
    CHECK(max_abs_diff(apply_color(img, ColorParams{}), img) < 1e-3);
  }
  SUBCASE("grayscale gives equal channels") {
    ColorParams p;
    p.grayscale = true;
    const ImageF g = apply_color(img, p);
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x) {
        CHECK(g.at(x, y, 0) == g.at(x, y, 1));
        CHECK(g.at(x, y, 1) == g.at(x, y, 2));
      }
  }
  SUBCASE("brightness scales and clamps") {
    ImageF gray(4, 4, 100.0f);
    gray.at(1, 1, 0) = 200.0f;
    ColorParams p;
    p.brightness = 1.4;
    const ImageF out = apply_color(gray, p);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x)
        for (int c = 0; c < 3; ++c) {
          const double expect = std::min(255.0, 1.4 * gray.at(x, y, c));
          CHECK(out.at(x, y, c) == doctest::Approx(expect).epsilon(1e-6));
        }
  }
  SUBCASE("contrast blends toward the gray mean") {
    ColorParams p;
    p.contrast = 0.5;
    const ImageF out = apply_color(img, p);
    double mean = 0;
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x) mean += 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
    mean /= 144.0;
    CHECK(out.at(3, 4, 1) == doctest::Approx(0.5 * img.at(3, 4, 1) + 0.5 * mean).epsilon(1e-4));
  }
  SUBCASE("sampled factors stay within the jitter ranges") {
    const AugPolicy policy;
    Rng rng(8);
    int gray = 0;
    for (int i = 0; i < 2000; ++i) {
      const ColorParams p = sample_color(policy, rng);
      CHECK(p.brightness >= 0.6);
      CHECK(p.brightness <= 1.4);
      CHECK(p.contrast >= 0.6);
      CHECK(p.saturation <= 1.4);
      CHECK(std::abs(p.hue) <= 0.1);
      gray += p.grayscale;
    }
    CHECK(gray / 2000.0 == doctest::Approx(0.2).epsilon(0.15));
  }
  SUBCASE("outputs stay in range") {
    const AugPolicy policy;
    Rng rng(9);
    for (int i = 0; i < 50; ++i) {
      const ImageF out = color_aug(img, policy, rng);
      for (float v : out.data()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 255.0f);
      }
    }
  }
}

TEST_CASE("rotation") {
  const ImageF img = random_image(9, 9, 10);
  SUBCASE("quarter turn matches the index oracle") { CHECK(rotate90(img, 90) == quarter_turn(img)); }
  SUBCASE("half turn twice is the identity") { CHECK(rotate90(rotate90(img, 180), 180) == img); }
  SUBCASE("four quarter turns are the identity") {
    ImageF r = img;
    for (int i = 0; i < 4; ++i) r = rotate90(r, 90);
    CHECK(r == img);
  }
  SUBCASE("90 then 180 equals 270") {
    CHECK(rotate90(rotate90(img, 90), 180) == rotate90(img, 270));
    CHECK(rotate90(img, 270) == quarter_turn(quarter_turn(quarter_turn(img))));
  }
  SUBCASE("pixel sum is invariant") {
    const AugPolicy policy;
    Rng rng(11);
    for (int i = 0; i < 20; ++i) {
      auto [out, angle] = rot_aug(img, policy, rng);
      CHECK((angle == 90 || angle == 180 || angle == 270));
      CHECK(pixel_sum(out) == doctest::Approx(pixel_sum(img)));
    }
  }
  SUBCASE("non-square input is rejected") {
    const AugPolicy policy;
    Rng rng(12);
    CHECK_THROWS(rot_aug(random_image(8, 9, 1), policy, rng));
  }
}

TEST_CASE("policy validation") {
  AugPolicy p;
  CHECK_NOTHROW(p.validate(256));
  CHECK_THROWS(p.validate(200));
  p.blur_sigma_min = 0;
  CHECK_THROWS(p.validate(256));
  p = AugPolicy{};
  p.rotations = {45};
  CHECK_THROWS(p.validate(256));
  p = AugPolicy{};
  p.blur_kernel = 4;
  CHECK_THROWS(p.validate(256));
}

TEST_CASE("view bundles") {
  const AugPolicy policy = small_policy();
  const Image8 patch = random_patch(32, 13);
  SUBCASE("moco v2 gives two differently augmented views") {
    Rng rng(14);
    const ViewBundle b = make_views(patch, ViewStrategy::kMocoV2, policy, rng);
    REQUIRE(b.view1);
    REQUIRE(b.key);
    CHECK_FALSE(b.view2);
    CHECK_FALSE(b.base);
    CHECK_FALSE(b.view1->trace.color == b.key->trace.color);
    CHECK_FALSE(b.view1->image == b.key->image);
  }
  SUBCASE("geo pairs a rotated view with a color key") {
    Rng rng(15);
    const ViewBundle b = make_views(patch, ViewStrategy::kGeo, policy, rng);
    REQUIRE(b.view2);
    REQUIRE(b.key);
    CHECK(b.view2->trace.rotation != 0);
    CHECK_FALSE(b.view2->trace.color);
    CHECK(b.key->trace.color);
  }
  SUBCASE("geocld pairing constraints") {
    Rng rng(16);
    for (int i = 0; i < 50; ++i) {
      const ViewBundle b = make_views(patch, ViewStrategy::kGeoCld, policy, rng);
      REQUIRE(b.view1);
      REQUIRE(b.view2);
      REQUIRE(b.key);
      CHECK(b.view1->trace.color == b.key->trace.color);
      CHECK(b.view1->trace.rotation != b.key->trace.rotation);
      CHECK(b.view2->trace.rotation == b.key->trace.rotation);
      CHECK_FALSE(b.view2->trace.color == b.key->trace.color);
    }
  }
  SUBCASE("mixco keeps the base reference as key") {
    Rng rng(17);
    const ViewBundle b = make_views(patch, ViewStrategy::kMixCo, policy, rng);
    REQUIRE(b.base);
    CHECK(b.key->image == b.base->image);
    CHECK(b.view1->trace.base == b.base->trace.base);
    CHECK(b.view2->trace.base == b.base->trace.base);
    CHECK(b.view2->image == rotate90(b.base->image, b.view2->trace.rotation));
  }
  SUBCASE("every view has the crop size and deterministic content") {
    for (auto s : {ViewStrategy::kMocoV2, ViewStrategy::kGeo, ViewStrategy::kCld, ViewStrategy::kGeoCld, ViewStrategy::kMixCo}) {
      Rng a(18), b(18);
      const ViewBundle x = make_views(patch, s, policy, a), y = make_views(patch, s, policy, b);
      for (const auto* v : {&x.base, &x.view1, &x.view2, &x.key}) {
        if (!*v) continue;
        CHECK((*v)->image.width() == 24);
        CHECK((*v)->image.height() == 24);
      }
      CHECK(x.trace_json() == y.trace_json());
      CHECK(x.key->image == y.key->image);
    }
  }
  SUBCASE("strategy names") {
    CHECK(parse_view_strategy("geocld") == ViewStrategy::kGeoCld);
    CHECK(std::string(to_string(ViewStrategy::kMixCo)) == "mixco");
    CHECK_THROWS(parse_view_strategy("simclr"));
  }
}
