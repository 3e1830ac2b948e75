#pragma once

#include <utility>
#include <vector>

#include "aerossl/contrastive.hpp"

namespace aerossl {

struct MixConfig {
  double gamma = 0.9;  // weight of the color branch in the unmixed loss
  double p = 0.3;      // probability of taking the mixture branch
  double alpha = 1.0;  // lambda ~ Beta(alpha, alpha)

  void validate() const;
};

struct MixDraw {
  bool apply_mix = false;
  double lambda = 1.0;
};

/// Draws prob ~ U[0,1) and lambda ~ Beta(alpha, alpha) (both every call, in
/// that order); apply_mix = prob < p.
MixDraw draw_mix(const MixConfig& config, Rng& rng);

/// gamma * mean Lq(q1, k+) + (1 - gamma) * mean Lq(q2, k+). q1 is the color branch.
double geo_loss(const Mat& q1, const Mat& q2, const Mat& k_plus, const Mat& negatives, double gamma, double tau);

/// Pixelwise lambda * a + (1 - lambda) * b.
ImageF mix_images(const ImageF& a, const ImageF& b, double lambda);

/// (lambda * I2 + (1 - lambda) * I, lambda * I2 + (1 - lambda) * I1).
std::pair<ImageF, ImageF> make_mixtures(const ImageF& base, const ImageF& color, const ImageF& rotated, double lambda);

/// lambda * mean Lq(qM, k+) + (1 - lambda) * mean Lq(qM', k+).
double mixture_loss(const Mat& q_m, const Mat& q_m_prime, const Mat& k_plus, const Mat& negatives, double lambda,
                    double tau);

/// Query views and loss plan for one mixture step given the draw. Keys are the
/// unmixed base views. `storage` keeps the mixed images alive.
struct MixBatch {
  std::vector<std::vector<const ImageF*>> query_views;
  std::vector<const ImageF*> keys;
  LossPlan plan;
  std::vector<ImageF> storage;
};
MixBatch prepare_mix_batch(const std::vector<ViewBundle>& batch, const MixConfig& config, const MixDraw& draw);

template <typename T>
StepResult mixco_step(const std::vector<ViewBundle>& batch, EncoderState<T>& state, FeatureQueue& queue,
                      BasicSgd<T>& optimizer, const MixConfig& config, const MixDraw& draw,
                      const StepOptions& options);

template <typename T>
StepResult mixco_step(const std::vector<ViewBundle>& batch, EncoderState<T>& state, FeatureQueue& queue,
                      BasicSgd<T>& optimizer, const MixConfig& config, Rng& rng, const StepOptions& options,
                      MixDraw* drawn = nullptr) {
  const MixDraw d = draw_mix(config, rng);
  if (drawn) *drawn = d;
  return mixco_step<T>(batch, state, queue, optimizer, config, d, options);
}

}  // namespace aerossl
