#include "aerossl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

namespace aerossl {

void AugPolicy::validate(int patch_size) const {
  if (crop_size <= 0) throw std::invalid_argument("crop_size must be positive");
  if (crop_size > patch_size) {
    throw std::invalid_argument("crop_size " + std::to_string(crop_size) + " exceeds patch size " +
                                std::to_string(patch_size));
  }
  if (!(blur_sigma_min > 0 && blur_sigma_max >= blur_sigma_min)) throw std::invalid_argument("blur sigma range must be positive");
  if (blur_kernel < 1 || blur_kernel % 2 == 0) throw std::invalid_argument("blur kernel must be odd");
  for (double p : {hflip_p, blur_p, grayscale_p}) {
    if (p < 0 || p > 1) throw std::invalid_argument("augmentation probabilities must lie in [0, 1]");
  }
  if (brightness < 0 || contrast < 0 || saturation < 0 || hue < 0 || hue > 0.5) {
    throw std::invalid_argument("invalid color jitter strength");
  }
  if (rotations.empty()) throw std::invalid_argument("rotation set is empty");
  for (int a : rotations) {
    if (a % 90 != 0) throw std::invalid_argument("rotation angles must be multiples of 90");
  }
}

ImageF hflip(const ImageF& img) {
  ImageF out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) out.at(img.width() - 1 - x, y, c) = img.at(x, y, c);
    }
  }
  return out;
}

namespace {

std::vector<double> gaussian_kernel(double sigma, int size) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const int r = size / 2;
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[static_cast<std::size_t>(i + r)];
  }
  for (double& v : k) v /= sum;
  return k;
}

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}

float clamp255(double v) { return static_cast<float>(std::clamp(v, 0.0, 255.0)); }

}  // namespace

ImageF gaussian_blur(const ImageF& img, double sigma, int kernel_size) {
  if (sigma <= 0) throw std::invalid_argument("blur sigma must be positive");
  const auto k = gaussian_kernel(sigma, kernel_size);
  const int r = kernel_size / 2;
  const int W = img.width(), H = img.height();
  ImageF tmp(W, H), out(W, H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * img.at(reflect(x + i, W), y, c);
        tmp.at(x, y, c) = static_cast<float>(acc);
      }
    }
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * tmp.at(x, reflect(y + i, H), c);
        out.at(x, y, c) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

ImageF rotate90(const ImageF& img, int angle) {
  const int turns = ((angle / 90) % 4 + 4) % 4;
  if (angle % 90 != 0) throw std::invalid_argument("rotation must be a multiple of 90 degrees");
  if (turns == 0) return img;
  const int W = img.width(), H = img.height();
  const bool swap = turns % 2 == 1;
  ImageF out(swap ? H : W, swap ? W : H);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      int sx = 0, sy = 0;
      switch (turns) {
        case 1: sx = W - 1 - y; sy = x; break;
        case 2: sx = W - 1 - x; sy = H - 1 - y; break;
        default: sx = y; sy = H - 1 - x; break;
      }
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

ImageF to_grayscale(const ImageF& img) {
  ImageF out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const float g = static_cast<float>(0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2));
      out.at(x, y, 0) = out.at(x, y, 1) = out.at(x, y, 2) = g;
    }
  }
  return out;
}

BaseParams sample_base(const AugPolicy& policy, int width, int height, Rng& rng) {
  if (width < policy.crop_size || height < policy.crop_size) {
    throw std::invalid_argument("base_aug needs at least " + std::to_string(policy.crop_size) + "x" +
                                std::to_string(policy.crop_size) + " input, got " + std::to_string(width) + "x" +
                                std::to_string(height));
  }
  BaseParams p;
  p.crop_x = uniform_int(rng, 0, width - policy.crop_size);
  p.crop_y = uniform_int(rng, 0, height - policy.crop_size);
  p.flip = uniform01(rng) < policy.hflip_p;
  p.blur = uniform01(rng) < policy.blur_p;
  const double u = uniform01(rng);
  p.sigma = p.blur ? policy.blur_sigma_min + (policy.blur_sigma_max - policy.blur_sigma_min) * u : 0.0;
  return p;
}

ImageF apply_base(const ImageF& img, const BaseParams& params, const AugPolicy& policy) {
  ImageF out = crop(img, params.crop_x, params.crop_y, policy.crop_size, policy.crop_size);
  if (params.flip) out = hflip(out);
  if (params.blur) out = gaussian_blur(out, params.sigma, policy.blur_kernel);
  return out;
}

ImageF base_aug(const ImageF& img, const AugPolicy& policy, Rng& rng, BaseParams* trace) {
  const BaseParams p = sample_base(policy, img.width(), img.height(), rng);
  if (trace) *trace = p;
  return apply_base(img, p, policy);
}

ColorParams sample_color(const AugPolicy& policy, Rng& rng) {
  auto factor = [&](double strength) {
    const double lo = std::max(0.0, 1.0 - strength), hi = 1.0 + strength;
    return lo + (hi - lo) * uniform01(rng);
  };
  ColorParams p;
  std::shuffle(p.order.begin(), p.order.end(), rng);
  p.brightness = factor(policy.brightness);
  p.contrast = factor(policy.contrast);
  p.saturation = factor(policy.saturation);
  p.hue = policy.hue * (2 * uniform01(rng) - 1);
  p.grayscale = uniform01(rng) < policy.grayscale_p;
  return p;
}

namespace {

void adjust_brightness(ImageF& img, double f) {
  if (f == 1.0) return;
  for (float& v : img.data()) v = clamp255(v * f);
}

void adjust_contrast(ImageF& img, double f) {
  if (f == 1.0) return;
  double mean = 0;
  const auto& d = img.data();
  for (std::size_t i = 0; i < d.size(); i += 3) mean += 0.299 * d[i] + 0.587 * d[i + 1] + 0.114 * d[i + 2];
  mean /= static_cast<double>(d.size() / 3);
  for (float& v : img.data()) v = clamp255(f * v + (1 - f) * mean);
}

void adjust_saturation(ImageF& img, double f) {
  if (f == 1.0) return;
  auto& d = img.data();
  for (std::size_t i = 0; i < d.size(); i += 3) {
    const double g = 0.299 * d[i] + 0.587 * d[i + 1] + 0.114 * d[i + 2];
    for (int c = 0; c < 3; ++c) d[i + c] = clamp255(f * d[i + c] + (1 - f) * g);
  }
}

void adjust_hue(ImageF& img, double shift) {
  if (shift == 0.0) return;
  auto& d = img.data();
  for (std::size_t i = 0; i < d.size(); i += 3) {
    const double r = d[i] / 255.0, g = d[i + 1] / 255.0, b = d[i + 2] / 255.0;
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const double delta = mx - mn;
    double h = 0;
    if (delta > 0) {
      if (mx == r) {
        h = std::fmod((g - b) / delta, 6.0);
      } else if (mx == g) {
        h = (b - r) / delta + 2;
      } else {
        h = (r - g) / delta + 4;
      }
      h /= 6.0;
    }
    h = h + shift;
    h -= std::floor(h);
    const double s = mx > 0 ? delta / mx : 0, v = mx;
    const double hh = h * 6;
    const int sector = static_cast<int>(hh) % 6;
    const double frac = hh - std::floor(hh);
    const double p = v * (1 - s), q = v * (1 - s * frac), t = v * (1 - s * (1 - frac));
    double rr = 0, gg = 0, bb = 0;
    switch (sector) {
      case 0: rr = v; gg = t; bb = p; break;
      case 1: rr = q; gg = v; bb = p; break;
      case 2: rr = p; gg = v; bb = t; break;
      case 3: rr = p; gg = q; bb = v; break;
      case 4: rr = t; gg = p; bb = v; break;
      default: rr = v; gg = p; bb = q; break;
    }
    d[i] = clamp255(rr * 255.0);
    d[i + 1] = clamp255(gg * 255.0);
    d[i + 2] = clamp255(bb * 255.0);
  }
}

}  // namespace

ImageF apply_color(const ImageF& img, const ColorParams& params) {
  ImageF out = img;
  for (int op : params.order) {
    switch (op) {
      case 0: adjust_brightness(out, params.brightness); break;
      case 1: adjust_contrast(out, params.contrast); break;
      case 2: adjust_saturation(out, params.saturation); break;
      case 3: adjust_hue(out, params.hue); break;
      default: throw std::invalid_argument("invalid color op index");
    }
  }
  if (params.grayscale) out = to_grayscale(out);
  return out;
}

ImageF color_aug(const ImageF& img, const AugPolicy& policy, Rng& rng, ColorParams* trace) {
  const ColorParams p = sample_color(policy, rng);
  if (trace) *trace = p;
  return apply_color(img, p);
}

int sample_rotation(const AugPolicy& policy, Rng& rng) {
  return policy.rotations[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(policy.rotations.size()) - 1))];
}

std::pair<ImageF, int> rot_aug(const ImageF& img, const AugPolicy& policy, Rng& rng) {
  if (img.width() != img.height()) {
    throw std::invalid_argument("rot_aug requires a square image, got " + std::to_string(img.width()) + "x" +
                                std::to_string(img.height()));
  }
  const int angle = sample_rotation(policy, rng);
  return {rotate90(img, angle), angle};
}

ViewStrategy parse_view_strategy(const std::string& name) {
  if (name == "moco_v2") return ViewStrategy::kMocoV2;
  if (name == "geo" || name == "moco_geo") return ViewStrategy::kGeo;
  if (name == "cld" || name == "moco_cld") return ViewStrategy::kCld;
  if (name == "geocld") return ViewStrategy::kGeoCld;
  if (name == "mixco") return ViewStrategy::kMixCo;
  throw std::invalid_argument("unknown augmentation strategy '" + name + "'");
}

const char* to_string(ViewStrategy s) {
  switch (s) {
    case ViewStrategy::kMocoV2: return "moco_v2";
    case ViewStrategy::kGeo: return "geo";
    case ViewStrategy::kCld: return "cld";
    case ViewStrategy::kGeoCld: return "geocld";
    case ViewStrategy::kMixCo: return "mixco";
  }
  return "?";
}

namespace {

View base_color_view(const ImageF& src, const AugPolicy& policy, Rng& rng) {
  View v;
  BaseParams b;
  ColorParams c;
  v.image = color_aug(base_aug(src, policy, rng, &b), policy, rng, &c);
  v.trace.base = b;
  v.trace.color = c;
  return v;
}

View base_rotation_view(const ImageF& src, const AugPolicy& policy, Rng& rng) {
  View v;
  BaseParams b;
  ImageF base = base_aug(src, policy, rng, &b);
  auto [rotated, angle] = rot_aug(base, policy, rng);
  v.image = std::move(rotated);
  v.trace.base = b;
  v.trace.rotation = angle;
  return v;
}

}  // namespace

ViewBundle make_views(const Image8& patch, ViewStrategy strategy, const AugPolicy& policy, Rng& rng) {
  const ImageF src = to_float(patch);
  ViewBundle bundle;
  switch (strategy) {
    case ViewStrategy::kMocoV2:
      bundle.view1 = base_color_view(src, policy, rng);
      bundle.key = base_color_view(src, policy, rng);
      break;
    case ViewStrategy::kGeo:
      bundle.view2 = base_rotation_view(src, policy, rng);
      bundle.key = base_color_view(src, policy, rng);
      break;
    case ViewStrategy::kCld:
      bundle.view1 = base_color_view(src, policy, rng);
      bundle.view2 = base_color_view(src, policy, rng);
      bundle.key = base_color_view(src, policy, rng);
      break;
    case ViewStrategy::kGeoCld: {
      // I1 shares its color draw with I+, I2 shares its rotation with I+.
      const ColorParams shared_color = sample_color(policy, rng);
      const int shared_angle = sample_rotation(policy, rng);
      View v1, v2, key;
      BaseParams b1, b2, bk;
      v1.image = apply_color(base_aug(src, policy, rng, &b1), shared_color);
      v1.trace.base = b1;
      v1.trace.color = shared_color;
      v2.image = rotate90(base_aug(src, policy, rng, &b2), shared_angle);
      v2.trace.base = b2;
      v2.trace.rotation = shared_angle;
      key.image = rotate90(apply_color(base_aug(src, policy, rng, &bk), shared_color), shared_angle);
      key.trace.base = bk;
      key.trace.color = shared_color;
      key.trace.rotation = shared_angle;
      bundle.view1 = std::move(v1);
      bundle.view2 = std::move(v2);
      bundle.key = std::move(key);
      break;
    }
    case ViewStrategy::kMixCo: {
      // x = base_aug(x); x_1 = color_aug(x); x_2 = geo_aug(x); key = x
      View base;
      BaseParams b;
      base.image = base_aug(src, policy, rng, &b);
      base.trace.base = b;
      View v1 = base, v2 = base;
      ColorParams c;
      v1.image = color_aug(base.image, policy, rng, &c);
      v1.trace.color = c;
      auto [rotated, angle] = rot_aug(base.image, policy, rng);
      v2.image = std::move(rotated);
      v2.trace.rotation = angle;
      bundle.key = base;
      bundle.base = std::move(base);
      bundle.view1 = std::move(v1);
      bundle.view2 = std::move(v2);
      break;
    }
  }
  return bundle;
}

namespace {

nlohmann::json trace_to_json(const ViewTrace& t) {
  nlohmann::json j;
  if (t.base) {
    j["base"] = {{"crop_x", t.base->crop_x}, {"crop_y", t.base->crop_y}, {"flip", t.base->flip},
                 {"blur", t.base->blur}, {"sigma", t.base->sigma}};
  }
  if (t.color) {
    j["color"] = {{"brightness", t.color->brightness}, {"contrast", t.color->contrast},
                  {"saturation", t.color->saturation}, {"hue", t.color->hue},
                  {"order", t.color->order}, {"grayscale", t.color->grayscale}};
  }
  j["rotation"] = t.rotation;
  return j;
}

}  // namespace

std::string ViewBundle::trace_json() const {
  nlohmann::json j = nlohmann::json::object();
  if (base) j["I"] = trace_to_json(base->trace);
  if (view1) j["I1"] = trace_to_json(view1->trace);
  if (view2) j["I2"] = trace_to_json(view2->trace);
  if (key) j["I_plus"] = trace_to_json(key->trace);
  return j.dump();
}

}  // namespace aerossl
