#include "aerossl/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace aerossl {

template <typename T>
void BasicSgd<T>::step(const std::vector<nn::Parameter<T>*>& params, double lr) {
  if (buffers_.empty()) {
    buffers_.resize(params.size());
  } else if (buffers_.size() != params.size()) {
    throw std::invalid_argument("Sgd: parameter list changed between steps");
  }
  const T mu = static_cast<T>(momentum_);
  const T wd = static_cast<T>(weight_decay_);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& buf = buffers_[i];
    const bool fresh = buf.empty();
    if (fresh) buf.resize(p.value.size());
    if (buf.size() != p.value.size()) throw std::invalid_argument("Sgd: parameter size changed");
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const T d = p.grad[j] + wd * p.value[j];
      buf[j] = fresh ? d : mu * buf[j] + d;
      p.value[j] -= rate * buf[j];
      p.grad[j] = T{};
    }
  }
}

double cosine_lr(double lr0, long step, long total) {
  if (total <= 0) return lr0;
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
}

template class BasicSgd<float>;
template class BasicSgd<double>;

}  // namespace aerossl
