#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "aerossl/tiling.hpp"

namespace aerossl {

namespace {

/// Smoothly interpolated lattice noise in roughly [-1, 1].
class ValueNoise {
 public:
  ValueNoise(int width, int height, double cell, Rng& rng)
      : cell_(cell),
        gw_(static_cast<int>(std::ceil(width / cell)) + 2),
        gh_(static_cast<int>(std::ceil(height / cell)) + 2),
        lattice_(static_cast<std::size_t>(gw_) * gh_) {
    for (auto& v : lattice_) v = 2.0 * uniform01(rng) - 1.0;
  }

  double operator()(double x, double y) const {
    const double gx = x / cell_, gy = y / cell_;
    const int ix = static_cast<int>(gx), iy = static_cast<int>(gy);
    const double fx = smooth(gx - ix), fy = smooth(gy - iy);
    const double a = node(ix, iy), b = node(ix + 1, iy);
    const double c = node(ix, iy + 1), d = node(ix + 1, iy + 1);
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy;
  }

 private:
  static double smooth(double t) { return t * t * (3 - 2 * t); }
  double node(int x, int y) const { return lattice_[static_cast<std::size_t>(y) * gw_ + x]; }

  double cell_;
  int gw_, gh_;
  std::vector<double> lattice_;
};

struct Rgb {
  double r, g, b;
};

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

void put(ImageF& img, int x, int y, const Rgb& c, double alpha = 1.0) {
  float* p = &img.at(x, y, 0);
  p[0] = static_cast<float>(p[0] * (1 - alpha) + c.r * alpha);
  p[1] = static_cast<float>(p[1] * (1 - alpha) + c.g * alpha);
  p[2] = static_cast<float>(p[2] * (1 - alpha) + c.b * alpha);
}

int poisson(Rng& rng, double mean) {
  if (mean <= 0) return 0;
  std::poisson_distribution<int> dist(mean);
  return dist(rng);
}

/// Tree canopy: dark disc with a noisy rim.
void paint_tree(ImageF& img, double cx, double cy, double radius, Rng& rng) {
  const Rgb canopy{52 + 20 * uniform01(rng), 70 + 25 * uniform01(rng), 38 + 12 * uniform01(rng)};
  const double wobble = 0.15 + 0.15 * uniform01(rng);
  const double phase = 2 * std::numbers::pi * uniform01(rng);
  const int r = static_cast<int>(std::ceil(radius * (1 + wobble))) + 1;
  for (int y = std::max(0, static_cast<int>(cy) - r); y <= std::min(img.height() - 1, static_cast<int>(cy) + r); ++y) {
    for (int x = std::max(0, static_cast<int>(cx) - r); x <= std::min(img.width() - 1, static_cast<int>(cx) + r); ++x) {
      const double dx = x - cx, dy = y - cy;
      const double ang = std::atan2(dy, dx);
      const double edge = radius * (1 + wobble * std::sin(5 * ang + phase));
      const double d = std::sqrt(dx * dx + dy * dy);
      if (d <= edge) put(img, x, y, canopy, std::clamp(edge - d, 0.0, 1.0) * 0.9);
    }
  }
}

}  // namespace

SourceFrame synth_frame(const SynthConfig& config, int index) {
  if (config.width <= 0 || config.height <= 0) throw std::invalid_argument("synth: frame size must be positive");
  if (config.blob_min_radius <= 0 || config.blob_max_radius < config.blob_min_radius) {
    throw std::invalid_argument("synth: invalid blob radius range");
  }
  if (2 * config.blob_max_radius + 4 > std::min(config.width, config.height)) {
    throw std::invalid_argument("synth: blob larger than frame");
  }

  Rng rng = make_rng(config.seed, {static_cast<std::uint64_t>(index)});
  const int W = config.width, H = config.height;
  ImageF img(W, H);

  // Ground: soil/grass mix driven by multi-octave noise, with per-frame illumination.
  const double illum = 1.0 + config.illumination_jitter * (2 * uniform01(rng) - 1);
  const Rgb tint{1.0 + 0.06 * (2 * uniform01(rng) - 1), 1.0, 1.0 + 0.06 * (2 * uniform01(rng) - 1)};
  const Rgb soil{168, 146, 112};
  const Rgb grass{118, 128, 78};
  ValueNoise coarse(W, H, config.texture_scale, rng);
  ValueNoise mid(W, H, config.texture_scale / 3.0, rng);
  ValueNoise fine(W, H, std::max(2.0, config.texture_scale / 12.0), rng);
  const double grass_bias = 0.6 * (2 * uniform01(rng) - 1);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double t = coarse(x, y) + 0.5 * mid(x, y) + grass_bias;
      const double mix = 1.0 / (1.0 + std::exp(-2.5 * t));
      Rgb c = lerp(soil, grass, mix);
      const double shade = config.texture_contrast * (0.35 * mid(x, y) + 0.25 * fine(x, y));
      float* p = &img.at(x, y, 0);
      p[0] = static_cast<float>(c.r + shade);
      p[1] = static_cast<float>(c.g + shade);
      p[2] = static_cast<float>(c.b + shade);
    }
  }

  const double area_units = static_cast<double>(W) * H / (512.0 * 512.0);
  const int trees = poisson(rng, config.tree_density * area_units);
  for (int i = 0; i < trees; ++i) {
    const double radius = config.tree_min_radius + (config.tree_max_radius - config.tree_min_radius) * uniform01(rng);
    paint_tree(img, W * uniform01(rng), H * uniform01(rng), radius, rng);
  }

  // Animals: small high-contrast ellipses with tight boxes.
  SourceFrame frame;
  const bool carries_animals = uniform01(rng) < config.prevalence;
  const int animals = carries_animals ? poisson(rng, config.blob_density * area_units) : 0;
  for (int i = 0; i < animals; ++i) {
    const double a = config.blob_min_radius + (config.blob_max_radius - config.blob_min_radius) * uniform01(rng);
    const double b = a * (0.45 + 0.3 * uniform01(rng));
    const double theta = std::numbers::pi * uniform01(rng);
    const int margin = static_cast<int>(std::ceil(a)) + 1;
    const double cx = uniform_int(rng, margin, W - 1 - margin) + uniform01(rng) - 0.5;
    const double cy = uniform_int(rng, margin, H - 1 - margin) + uniform01(rng) - 0.5;
    const bool dark = uniform01(rng) < 0.5;
    const Rgb body = dark ? Rgb{48 + 20 * uniform01(rng), 36 + 14 * uniform01(rng), 28 + 10 * uniform01(rng)}
                          : Rgb{222 + 25 * uniform01(rng), 210 + 25 * uniform01(rng), 190 + 25 * uniform01(rng)};
    const double ct = std::cos(theta), st = std::sin(theta);
    int x0 = W, y0 = H, x1 = -1, y1 = -1;
    for (int y = static_cast<int>(cy) - margin; y <= static_cast<int>(cy) + margin; ++y) {
      for (int x = static_cast<int>(cx) - margin; x <= static_cast<int>(cx) + margin; ++x) {
        if (x < 0 || y < 0 || x >= W || y >= H) continue;
        const double dx = x - cx, dy = y - cy;
        const double u = (dx * ct + dy * st) / a, v = (-dx * st + dy * ct) / b;
        if (u * u + v * v > 1.0) continue;
        put(img, x, y, body);
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
    if (x1 >= x0 && y1 >= y0) frame.annotations.push_back({x0, y0, x1 - x0 + 1, y1 - y0 + 1});
  }

  for (float& v : img.data()) v = static_cast<float>(v * illum);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      img.at(x, y, 0) = static_cast<float>(img.at(x, y, 0) * tint.r);
      img.at(x, y, 2) = static_cast<float>(img.at(x, y, 2) * tint.b);
    }
  }

  char id[32];
  std::snprintf(id, sizeof(id), "frame_%04d", index);
  frame.frame_id = id;
  frame.pixels = to_u8(img);
  return frame;
}

std::vector<SourceFrame> synth_generate(const SynthConfig& config) {
  if (config.frames < 0) throw std::invalid_argument("synth: negative frame count");
  std::vector<SourceFrame> frames;
  frames.reserve(static_cast<std::size_t>(config.frames));
  for (int i = 0; i < config.frames; ++i) frames.push_back(synth_frame(config, i));
  return frames;
}

}  // namespace aerossl
