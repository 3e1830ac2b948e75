#pragma once

#include <vector>

#include "aerossl/nn.hpp"

namespace aerossl {

/// SGD with heavy-ball momentum and coupled weight decay:
/// v = mu * v + (g + wd * p); p -= lr * v. The first step initializes v = g + wd * p.
template <typename T>
class BasicSgd {
 public:
  explicit BasicSgd(double momentum = 0.9, double weight_decay = 1e-4)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  /// Applies one update to `params` and clears their gradients. The parameter
  /// list must be the same (same order and sizes) on every call.
  void step(const std::vector<nn::Parameter<T>*>& params, double lr);

  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }
  const std::vector<std::vector<T>>& buffers() const { return buffers_; }
  void set_buffers(std::vector<std::vector<T>> buffers) { buffers_ = std::move(buffers); }

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<T>> buffers_;
};

using Sgd = BasicSgd<float>;

/// lr0 * 0.5 * (1 + cos(pi * step / total)).
double cosine_lr(double lr0, long step, long total);

}  // namespace aerossl
