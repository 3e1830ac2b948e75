#include "aerossl/mixgeo.hpp"

#include <stdexcept>

namespace aerossl {

void MixConfig::validate() const {
  if (!(gamma >= 0 && gamma <= 1)) throw std::invalid_argument("gamma must be in [0, 1]");
  if (!(p >= 0 && p <= 1)) throw std::invalid_argument("mixture probability must be in [0, 1]");
  if (!(alpha > 0)) throw std::invalid_argument("beta parameter must be positive");
}

MixDraw draw_mix(const MixConfig& config, Rng& rng) {
  config.validate();
  const double prob = uniform01(rng);
  MixDraw d;
  d.lambda = sample_beta(rng, config.alpha, config.alpha);
  d.apply_mix = prob < config.p;
  return d;
}

double geo_loss(const Mat& q1, const Mat& q2, const Mat& k_plus, const Mat& negatives, double gamma, double tau) {
  if (!(gamma >= 0 && gamma <= 1)) throw std::invalid_argument("gamma must be in [0, 1]");
  return gamma * batch_info_nce(q1, k_plus, negatives, tau).loss +
         (1.0 - gamma) * batch_info_nce(q2, k_plus, negatives, tau).loss;
}

ImageF mix_images(const ImageF& a, const ImageF& b, double lambda) {
  if (a.width() != b.width() || a.height() != b.height()) throw std::invalid_argument("mix_images: shape mismatch");
  ImageF out(a.width(), a.height());
  const auto& da = a.data();
  const auto& db = b.data();
  auto& dst = out.data();
  const float l = static_cast<float>(lambda);
  const float r = static_cast<float>(1.0 - lambda);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = l * da[i] + r * db[i];
  return out;
}

std::pair<ImageF, ImageF> make_mixtures(const ImageF& base, const ImageF& color, const ImageF& rotated,
                                        double lambda) {
  return {mix_images(rotated, base, lambda), mix_images(rotated, color, lambda)};
}

double mixture_loss(const Mat& q_m, const Mat& q_m_prime, const Mat& k_plus, const Mat& negatives, double lambda,
                    double tau) {
  if (!(lambda >= 0 && lambda <= 1)) throw std::invalid_argument("lambda must be in [0, 1]");
  return lambda * batch_info_nce(q_m, k_plus, negatives, tau).loss +
         (1.0 - lambda) * batch_info_nce(q_m_prime, k_plus, negatives, tau).loss;
}

MixBatch prepare_mix_batch(const std::vector<ViewBundle>& batch, const MixConfig& config, const MixDraw& draw) {
  config.validate();
  MixBatch mb;
  mb.query_views.resize(2);
  if (draw.apply_mix) mb.storage.reserve(batch.size() * 2);
  for (const auto& b : batch) {
    if (!b.base) throw std::invalid_argument("mixco_step needs the base view I");
    if (!b.view1 || !b.view2) throw std::invalid_argument("mixco_step needs color and rotation views");
    mb.keys.push_back(b.key ? &b.key->image : &b.base->image);
    if (draw.apply_mix) {
      auto [ggm, gcm] = make_mixtures(b.base->image, b.view1->image, b.view2->image, draw.lambda);
      mb.storage.push_back(std::move(ggm));
      mb.storage.push_back(std::move(gcm));
    }
  }
  if (draw.apply_mix) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      mb.query_views[0].push_back(&mb.storage[2 * i]);
      mb.query_views[1].push_back(&mb.storage[2 * i + 1]);
    }
    mb.plan.view_weights = {draw.lambda, 1.0 - draw.lambda};
  } else {
    for (const auto& b : batch) {
      mb.query_views[0].push_back(&b.view1->image);
      mb.query_views[1].push_back(&b.view2->image);
    }
    mb.plan.view_weights = {config.gamma, 1.0 - config.gamma};
  }
  return mb;
}

template <typename T>
StepResult mixco_step(const std::vector<ViewBundle>& batch, EncoderState<T>& state, FeatureQueue& queue,
                      BasicSgd<T>& optimizer, const MixConfig& config, const MixDraw& draw,
                      const StepOptions& options) {
  const MixBatch mb = prepare_mix_batch(batch, config, draw);
  return contrastive_step<T>(mb.query_views, mb.keys, mb.plan, state, queue, optimizer, options);
}

template StepResult mixco_step<float>(const std::vector<ViewBundle>&, EncoderState<float>&, FeatureQueue&,
                                      BasicSgd<float>&, const MixConfig&, const MixDraw&, const StepOptions&);
template StepResult mixco_step<double>(const std::vector<ViewBundle>&, EncoderState<double>&, FeatureQueue&,
                                       BasicSgd<double>&, const MixConfig&, const MixDraw&, const StepOptions&);

}  // namespace aerossl
