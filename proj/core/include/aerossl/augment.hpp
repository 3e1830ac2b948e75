#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aerossl/image.hpp"
#include "aerossl/rng.hpp"

namespace aerossl {

/// Stochastic augmentation module: base (crop/flip/blur), color (jitter/grayscale)
/// and lossless 90-degree rotations.
struct AugPolicy {
  int crop_size = 224;
  double hflip_p = 0.5;
  double blur_p = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  int blur_kernel = 23;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;
  double grayscale_p = 0.2;
  std::vector<int> rotations{90, 180, 270};

  /// Throws std::invalid_argument if the policy is inconsistent or does not fit `patch_size`.
  void validate(int patch_size) const;
};

struct BaseParams {
  int crop_x = 0;
  int crop_y = 0;
  bool flip = false;
  bool blur = false;
  double sigma = 0.0;
  bool operator==(const BaseParams&) const = default;
};

/// Color jitter factors; `order` is the permutation in which brightness(0),
/// contrast(1), saturation(2) and hue(3) are applied.
struct ColorParams {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue = 0.0;
  std::array<int, 4> order{0, 1, 2, 3};
  bool grayscale = false;
  bool operator==(const ColorParams&) const = default;
};

struct ViewTrace {
  std::optional<BaseParams> base;
  std::optional<ColorParams> color;
  int rotation = 0;
};

ImageF hflip(const ImageF& img);
ImageF gaussian_blur(const ImageF& img, double sigma, int kernel_size);
/// Counter-clockwise rotation by a multiple of 90 degrees; pure index permutation.
ImageF rotate90(const ImageF& img, int angle);
ImageF to_grayscale(const ImageF& img);

BaseParams sample_base(const AugPolicy& policy, int width, int height, Rng& rng);
ImageF apply_base(const ImageF& img, const BaseParams& params, const AugPolicy& policy);
ImageF base_aug(const ImageF& img, const AugPolicy& policy, Rng& rng, BaseParams* trace = nullptr);

ColorParams sample_color(const AugPolicy& policy, Rng& rng);
ImageF apply_color(const ImageF& img, const ColorParams& params);
ImageF color_aug(const ImageF& img, const AugPolicy& policy, Rng& rng, ColorParams* trace = nullptr);

int sample_rotation(const AugPolicy& policy, Rng& rng);
/// Returns the rotated image and the sampled angle. Requires a square image.
std::pair<ImageF, int> rot_aug(const ImageF& img, const AugPolicy& policy, Rng& rng);

enum class ViewStrategy { kMocoV2, kGeo, kCld, kGeoCld, kMixCo };
ViewStrategy parse_view_strategy(const std::string& name);
const char* to_string(ViewStrategy s);

struct View {
  ImageF image;
  ViewTrace trace;
};

/// Views produced for one patch: base reference I, color branch I1, second
/// branch I2 and key view I+. Which slots are filled depends on the strategy.
struct ViewBundle {
  std::optional<View> base;
  std::optional<View> view1;
  std::optional<View> view2;
  std::optional<View> key;

  std::string trace_json() const;
};

ViewBundle make_views(const Image8& patch, ViewStrategy strategy, const AugPolicy& policy, Rng& rng);

}  // namespace aerossl
