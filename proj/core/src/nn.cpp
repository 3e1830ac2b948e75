#include "aerossl/nn.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace aerossl::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void fill_normal(std::vector<T>& v, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (T& x : v) x = static_cast<T>(dist(rng));
}

template <typename T>
void fill_uniform(std::vector<T>& v, double bound, Rng& rng) {
  for (T& x : v) x = static_cast<T>((2 * uniform01(rng) - 1) * bound);
}

}  // namespace

template <typename T>
Tensor<T> concat_batch(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) return {};
  const Tensor<T>& first = *parts.front();
  int n = 0;
  for (const auto* p : parts) {
    if (p->c != first.c || p->h != first.h || p->w != first.w) throw std::invalid_argument("concat_batch: shape mismatch");
    n += p->n;
  }
  Tensor<T> out(n, first.c, first.h, first.w);
  auto it = out.data.begin();
  for (const auto* p : parts) it = std::copy(p->data.begin(), p->data.end(), it);
  return out;
}

template <typename T>
Tensor<T> slice_batch(const Tensor<T>& t, int begin, int count) {
  if (begin < 0 || count < 0 || begin + count > t.n) throw std::out_of_range("slice_batch: range outside batch");
  Tensor<T> out(count, t.c, t.h, t.w);
  std::copy(t.sample(begin), t.sample(begin) + static_cast<std::size_t>(count) * t.sample_size(), out.data.begin());
  return out;
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, bool bias, std::string name)
    : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(padding), has_bias_(bias),
      weight_(name + ".weight", static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel),
      bias_(name + ".bias", bias ? static_cast<std::size_t>(out_channels) : 0) {
  if (in_ <= 0 || out_ <= 0 || k_ <= 0 || stride_ <= 0 || pad_ < 0) throw std::invalid_argument("invalid Conv2d geometry");
}

template <typename T>
void Conv2d<T>::reset_parameters(Rng& rng) {
  fill_normal(weight_.value, std::sqrt(2.0 / (in_ * k_ * k_)), rng);
  std::fill(bias_.value.begin(), bias_.value.end(), T{});
}

template <typename T>
void Conv2d<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  if (x.c != in_) throw std::invalid_argument("Conv2d: expected " + std::to_string(in_) + " input channels");
  batch_ = x.n;
  in_h_ = x.h;
  in_w_ = x.w;
  out_h_ = (in_h_ + 2 * pad_ - k_) / stride_ + 1;
  out_w_ = (in_w_ + 2 * pad_ - k_) / stride_ + 1;
  if (out_h_ <= 0 || out_w_ <= 0) throw std::invalid_argument("Conv2d: input smaller than kernel");
  const int K = in_ * k_ * k_;
  const int P = out_h_ * out_w_;
  cols_.assign(static_cast<std::size_t>(batch_) * K * P, T{});
  Tensor<T> y(batch_, out_, out_h_, out_w_);
  CMapMat<T> W(weight_.value.data(), out_, K);

  for (int i = 0; i < batch_; ++i) {
    const T* src = x.sample(i);
    T* col = cols_.data() + static_cast<std::size_t>(i) * K * P;
    for (int c = 0; c < in_; ++c) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          T* row = col + static_cast<std::size_t>((c * k_ + ky) * k_ + kx) * P;
          for (int oy = 0; oy < out_h_; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            T* dst = row + oy * out_w_;
            if (iy < 0 || iy >= in_h_) continue;
            const T* line = src + (static_cast<std::size_t>(c) * in_h_ + iy) * in_w_;
            for (int ox = 0; ox < out_w_; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < in_w_) dst[ox] = line[ix];
            }
          }
        }
      }
    }
    CMapMat<T> C(col, K, P);
    MapMat<T> Y(y.sample(i), out_, P);
    Y.noalias() = W * C;
    if (has_bias_) {
      for (int o = 0; o < out_; ++o) Y.row(o).array() += bias_.value[static_cast<std::size_t>(o)];
    }
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  if (grad_out.n != batch_ || grad_out.c != out_ || grad_out.h != out_h_ || grad_out.w != out_w_) {
    throw std::invalid_argument("Conv2d::backward: gradient shape mismatch");
  }
  const int K = in_ * k_ * k_;
  const int P = out_h_ * out_w_;
  Tensor<T> dx(batch_, in_, in_h_, in_w_);
  CMapMat<T> W(weight_.value.data(), out_, K);
  MapMat<T> dW(weight_.grad.data(), out_, K);
  RowMat<T> dcol(K, P);

  for (int i = 0; i < batch_; ++i) {
    CMapMat<T> dY(grad_out.sample(i), out_, P);
    CMapMat<T> C(cols_.data() + static_cast<std::size_t>(i) * K * P, K, P);
    dW.noalias() += dY * C.transpose();
    if (has_bias_) {
      // Plain loops: Eigen reductions over mapped buffers reorder the sum by address alignment.
      const T* g = grad_out.sample(i);
      for (int o = 0; o < out_; ++o) {
        T acc = 0;
        for (int p = 0; p < P; ++p) acc += g[static_cast<std::size_t>(o) * P + p];
        bias_.grad[static_cast<std::size_t>(o)] += acc;
      }
    }
    dcol.noalias() = W.transpose() * dY;
    T* dst = dx.sample(i);
    for (int c = 0; c < in_; ++c) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const T* row = dcol.data() + static_cast<std::size_t>((c * k_ + ky) * k_ + kx) * P;
          for (int oy = 0; oy < out_h_; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= in_h_) continue;
            T* line = dst + (static_cast<std::size_t>(c) * in_h_ + iy) * in_w_;
            for (int ox = 0; ox < out_w_; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < in_w_) line[ix] += row[oy * out_w_ + ox];
            }
          }
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- GroupNorm

template <typename T>
GroupNorm<T>::GroupNorm(int groups, int channels, std::string name, double eps)
    : groups_(groups), channels_(channels), eps_(eps),
      gamma_(name + ".gamma", static_cast<std::size_t>(channels)),
      beta_(name + ".beta", static_cast<std::size_t>(channels)) {
  if (groups <= 0 || channels % groups != 0) throw std::invalid_argument("GroupNorm: channels must divide into groups");
  std::fill(gamma_.value.begin(), gamma_.value.end(), T{1});
}

template <typename T>
void GroupNorm<T>::reset_parameters(Rng&) {
  std::fill(gamma_.value.begin(), gamma_.value.end(), T{1});
  std::fill(beta_.value.begin(), beta_.value.end(), T{});
}

template <typename T>
void GroupNorm<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

template <typename T>
Tensor<T> GroupNorm<T>::forward(const Tensor<T>& x) {
  if (x.c != channels_) throw std::invalid_argument("GroupNorm: channel mismatch");
  const int cpg = channels_ / groups_;
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  const std::size_t m = hw * cpg;
  xhat_ = Tensor<T>(x.n, x.c, x.h, x.w);
  inv_std_.assign(static_cast<std::size_t>(x.n) * groups_, T{});
  Tensor<T> y(x.n, x.c, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    for (int g = 0; g < groups_; ++g) {
      const std::size_t off = static_cast<std::size_t>(i) * x.sample_size() + g * m;
      const T* src = x.data.data() + off;
      double mean = 0;
      for (std::size_t j = 0; j < m; ++j) mean += src[j];
      mean /= static_cast<double>(m);
      double var = 0;
      for (std::size_t j = 0; j < m; ++j) var += (src[j] - mean) * (src[j] - mean);
      var /= static_cast<double>(m);
      const double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_[static_cast<std::size_t>(i) * groups_ + g] = static_cast<T>(inv);
      T* xh = xhat_.data.data() + off;
      T* dst = y.data.data() + off;
      for (int cc = 0; cc < cpg; ++cc) {
        const std::size_t ch = static_cast<std::size_t>(g * cpg + cc);
        const T gam = gamma_.value[ch], bet = beta_.value[ch];
        for (std::size_t j = cc * hw; j < (cc + 1) * hw; ++j) {
          xh[j] = static_cast<T>((src[j] - mean) * inv);
          dst[j] = gam * xh[j] + bet;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> GroupNorm<T>::backward(const Tensor<T>& grad_out) {
  if (!grad_out.same_shape(xhat_)) throw std::invalid_argument("GroupNorm::backward: gradient shape mismatch");
  const int cpg = channels_ / groups_;
  const std::size_t hw = static_cast<std::size_t>(grad_out.h) * grad_out.w;
  const std::size_t m = hw * cpg;
  Tensor<T> dx(grad_out.n, grad_out.c, grad_out.h, grad_out.w);
  for (int i = 0; i < grad_out.n; ++i) {
    for (int g = 0; g < groups_; ++g) {
      const std::size_t off = static_cast<std::size_t>(i) * grad_out.sample_size() + g * m;
      const T* dy = grad_out.data.data() + off;
      const T* xh = xhat_.data.data() + off;
      double sum_dxh = 0, sum_dxh_xh = 0;
      for (int cc = 0; cc < cpg; ++cc) {
        const std::size_t ch = static_cast<std::size_t>(g * cpg + cc);
        const double gam = gamma_.value[ch];
        double dg = 0, db = 0;
        for (std::size_t j = cc * hw; j < (cc + 1) * hw; ++j) {
          dg += static_cast<double>(dy[j]) * xh[j];
          db += dy[j];
          const double dxh = dy[j] * gam;
          sum_dxh += dxh;
          sum_dxh_xh += dxh * xh[j];
        }
        gamma_.grad[ch] += static_cast<T>(dg);
        beta_.grad[ch] += static_cast<T>(db);
      }
      const double inv = inv_std_[static_cast<std::size_t>(i) * groups_ + g];
      const double md = static_cast<double>(m);
      T* out = dx.data.data() + off;
      for (int cc = 0; cc < cpg; ++cc) {
        const double gam = gamma_.value[static_cast<std::size_t>(g * cpg + cc)];
        for (std::size_t j = cc * hw; j < (cc + 1) * hw; ++j) {
          const double dxh = dy[j] * gam;
          out[j] = static_cast<T>(inv / md * (md * dxh - sum_dxh - xh[j] * sum_dxh_xh));
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- ReLU

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x) {
  out_ = x;
  for (T& v : out_.data) v = v > T{} ? v : T{};
  return out_;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_out) {
  if (!grad_out.same_shape(out_)) throw std::invalid_argument("ReLU::backward: gradient shape mismatch");
  Tensor<T> dx = grad_out;
  for (std::size_t i = 0; i < dx.data.size(); ++i) {
    if (!(out_.data[i] > T{})) dx.data[i] = T{};
  }
  return dx;
}

// ---------------------------------------------------------------- MaxPool2d

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x) {
  in_n_ = x.n;
  in_c_ = x.c;
  in_h_ = x.h;
  in_w_ = x.w;
  const int oh = (x.h + 2 * pad_ - k_) / stride_ + 1;
  const int ow = (x.w + 2 * pad_ - k_) / stride_ + 1;
  Tensor<T> y(x.n, x.c, oh, ow);
  argmax_.assign(y.size(), 0);
  std::size_t o = 0;
  for (int i = 0; i < x.n; ++i) {
    for (int c = 0; c < x.c; ++c) {
      const std::size_t plane = (static_cast<std::size_t>(i) * x.c + c) * x.h * x.w;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t arg = plane;
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= x.h) continue;
            for (int kx = 0; kx < k_; ++kx) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= x.w) continue;
              const std::size_t idx = plane + static_cast<std::size_t>(iy) * x.w + ix;
              if (x.data[idx] > best) {
                best = x.data[idx];
                arg = idx;
              }
            }
          }
          y.data[o] = best;
          argmax_[o] = arg;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& grad_out) {
  if (grad_out.size() != argmax_.size()) throw std::invalid_argument("MaxPool2d::backward: gradient shape mismatch");
  Tensor<T> dx(in_n_, in_c_, in_h_, in_w_);
  for (std::size_t o = 0; o < argmax_.size(); ++o) dx.data[argmax_[o]] += grad_out.data[o];
  return dx;
}

// ---------------------------------------------------------------- GlobalAvgPool

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x) {
  n_ = x.n;
  c_ = x.c;
  h_ = x.h;
  w_ = x.w;
  const std::size_t hw = static_cast<std::size_t>(h_) * w_;
  Tensor<T> y(n_, c_, 1, 1);
  for (std::size_t p = 0; p < y.size(); ++p) {
    double acc = 0;
    const T* src = x.data.data() + p * hw;
    for (std::size_t j = 0; j < hw; ++j) acc += src[j];
    y.data[p] = static_cast<T>(acc / static_cast<double>(hw));
  }
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
  if (grad_out.n != n_ || grad_out.c != c_) throw std::invalid_argument("GlobalAvgPool::backward: gradient shape mismatch");
  const std::size_t hw = static_cast<std::size_t>(h_) * w_;
  Tensor<T> dx(n_, c_, h_, w_);
  for (std::size_t p = 0; p < grad_out.size(); ++p) {
    const T g = static_cast<T>(grad_out.data[p] / static_cast<double>(hw));
    std::fill(dx.data.begin() + static_cast<std::ptrdiff_t>(p * hw), dx.data.begin() + static_cast<std::ptrdiff_t>((p + 1) * hw), g);
  }
  return dx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(int in_features, int out_features, std::string name)
    : in_(in_features), out_(out_features),
      weight_(name + ".weight", static_cast<std::size_t>(in_features) * out_features),
      bias_(name + ".bias", static_cast<std::size_t>(out_features)) {
  if (in_ <= 0 || out_ <= 0) throw std::invalid_argument("Linear: feature counts must be positive");
}

template <typename T>
void Linear<T>::reset_parameters(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  fill_uniform(weight_.value, bound, rng);
  fill_uniform(bias_.value, bound, rng);
}

template <typename T>
void Linear<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  if (static_cast<int>(x.sample_size()) != in_) {
    throw std::invalid_argument("Linear: expected " + std::to_string(in_) + " features, got " + std::to_string(x.sample_size()));
  }
  input_ = x;
  Tensor<T> y(x.n, out_, 1, 1);
  CMapMat<T> X(x.data.data(), x.n, in_);
  CMapMat<T> W(weight_.value.data(), out_, in_);
  MapMat<T> Y(y.data.data(), x.n, out_);
  Y.noalias() = X * W.transpose();
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_.value.data(), out_);
  Y.rowwise() += b;
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  if (grad_out.n != input_.n || static_cast<int>(grad_out.sample_size()) != out_) {
    throw std::invalid_argument("Linear::backward: gradient shape mismatch");
  }
  CMapMat<T> dY(grad_out.data.data(), grad_out.n, out_);
  CMapMat<T> X(input_.data.data(), input_.n, in_);
  CMapMat<T> W(weight_.value.data(), out_, in_);
  MapMat<T> dW(weight_.grad.data(), out_, in_);
  dW.noalias() += dY.transpose() * X;
  // Fixed summation order regardless of buffer alignment.
  for (int i = 0; i < grad_out.n; ++i)
    for (int o = 0; o < out_; ++o) bias_.grad[static_cast<std::size_t>(o)] += dY(i, o);
  Tensor<T> dx(input_.n, input_.c, input_.h, input_.w);
  MapMat<T> dX(dx.data.data(), input_.n, in_);
  dX.noalias() = dY * W;
  return dx;
}

// ---------------------------------------------------------------- Sequential

template <typename T>
Sequential<T>::Sequential(const Sequential& other) : Module<T>() {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x) {
  Tensor<T> h = x;
  for (auto& l : layers_) h = l->forward(h);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <typename T>
void Sequential<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  for (auto& l : layers_) l->collect_parameters(out);
}

template <typename T>
void Sequential<T>::reset_parameters(Rng& rng) {
  for (auto& l : layers_) l->reset_parameters(rng);
}

template <typename T>
void Sequential<T>::clear_cache() {
  for (auto& l : layers_) l->clear_cache();
}

// ---------------------------------------------------------------- Bottleneck

template <typename T>
Bottleneck<T>::Bottleneck(int in_channels, int width, int stride, int groups, const std::string& name)
    : out_channels_(width * 4) {
  main_.template emplace<Conv2d<T>>(in_channels, width, 1, 1, 0, false, name + ".conv1");
  main_.template emplace<GroupNorm<T>>(groups, width, name + ".gn1");
  main_.template emplace<ReLU<T>>();
  main_.template emplace<Conv2d<T>>(width, width, 3, stride, 1, false, name + ".conv2");
  main_.template emplace<GroupNorm<T>>(groups, width, name + ".gn2");
  main_.template emplace<ReLU<T>>();
  main_.template emplace<Conv2d<T>>(width, out_channels_, 1, 1, 0, false, name + ".conv3");
  main_.template emplace<GroupNorm<T>>(groups, out_channels_, name + ".gn3");
  if (stride != 1 || in_channels != out_channels_) {
    shortcut_ = std::make_unique<Sequential<T>>();
    shortcut_->template emplace<Conv2d<T>>(in_channels, out_channels_, 1, stride, 0, false, name + ".down");
    shortcut_->template emplace<GroupNorm<T>>(groups, out_channels_, name + ".down_gn");
  }
}

template <typename T>
Bottleneck<T>::Bottleneck(const Bottleneck& other)
    : Module<T>(), out_channels_(other.out_channels_), main_(other.main_),
      shortcut_(other.shortcut_ ? std::make_unique<Sequential<T>>(*other.shortcut_) : nullptr),
      relu_(other.relu_) {}

template <typename T>
Tensor<T> Bottleneck<T>::forward(const Tensor<T>& x) {
  Tensor<T> y = main_.forward(x);
  const Tensor<T> skip = shortcut_ ? shortcut_->forward(x) : x;
  if (!y.same_shape(skip)) throw std::logic_error("Bottleneck: residual shape mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += skip.data[i];
  return relu_.forward(y);
}

template <typename T>
Tensor<T> Bottleneck<T>::backward(const Tensor<T>& grad_out) {
  const Tensor<T> g = relu_.backward(grad_out);
  Tensor<T> dx = main_.backward(g);
  const Tensor<T> dskip = shortcut_ ? shortcut_->backward(g) : g;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dskip.data[i];
  return dx;
}

template <typename T>
void Bottleneck<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  main_.collect_parameters(out);
  if (shortcut_) shortcut_->collect_parameters(out);
}

template <typename T>
void Bottleneck<T>::reset_parameters(Rng& rng) {
  main_.reset_parameters(rng);
  if (shortcut_) shortcut_->reset_parameters(rng);
}

template <typename T>
void Bottleneck<T>::clear_cache() {
  main_.clear_cache();
  if (shortcut_) shortcut_->clear_cache();
  relu_.clear_cache();
}

#define AEROSSL_INSTANTIATE(T)                                                   \
  template Tensor<T> concat_batch<T>(const std::vector<const Tensor<T>*>&);      \
  template Tensor<T> slice_batch<T>(const Tensor<T>&, int, int);                 \
  template class Conv2d<T>;                                                      \
  template class GroupNorm<T>;                                                   \
  template class ReLU<T>;                                                        \
  template class MaxPool2d<T>;                                                   \
  template class GlobalAvgPool<T>;                                               \
  template class Linear<T>;                                                      \
  template class Sequential<T>;                                                  \
  template class Bottleneck<T>;

AEROSSL_INSTANTIATE(float)
AEROSSL_INSTANTIATE(double)

#undef AEROSSL_INSTANTIATE

}  // namespace aerossl::nn
