#pragma once

#include <memory>
#include <string>
#include <vector>

#include "aerossl/rng.hpp"

namespace aerossl::nn {

/// Dense NCHW tensor.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T{})
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  T* sample(int i) { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
  const T* sample(int i) const { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

/// Concatenates along the batch axis.
template <typename T>
Tensor<T> concat_batch(const std::vector<const Tensor<T>*>& parts);
/// Rows [begin, begin + count) of the batch.
template <typename T>
Tensor<T> slice_batch(const Tensor<T>& t, int begin, int count);

template <typename T>
struct Parameter {
  std::string name;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string name_, std::size_t size) : name(std::move(name_)), value(size), grad(size) {}
};

/// A layer with explicit forward/backward. `forward` caches what `backward`
/// needs; `backward` accumulates parameter gradients and returns the input gradient.
template <typename T>
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual void collect_parameters(std::vector<Parameter<T>*>& /*out*/) {}
  virtual void reset_parameters(Rng& /*rng*/) {}
  virtual std::unique_ptr<Module<T>> clone() const = 0;
  /// Drops cached activations.
  virtual void clear_cache() {}

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    collect_parameters(out);
    return out;
  }
};

template <typename T>
class Conv2d final : public Module<T> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, bool bias, std::string name);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void reset_parameters(Rng& rng) override;
  std::unique_ptr<Module<T>> clone() const override { return std::make_unique<Conv2d>(*this); }
  void clear_cache() override { cols_.clear(); }

  Parameter<T>& weight() { return weight_; }

 private:
  int in_, out_, k_, stride_, pad_;
  bool has_bias_;
  Parameter<T> weight_;  // out x (in * k * k)
  Parameter<T> bias_;
  int in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0, batch_ = 0;
  std::vector<T> cols_;  // per-sample im2col buffers, concatenated
};

/// Per-sample normalization over channel groups with a per-channel affine.
template <typename T>
class GroupNorm final : public Module<T> {
 public:
  GroupNorm(int groups, int channels, std::string name, double eps = 1e-5);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void reset_parameters(Rng& rng) override;
  std::unique_ptr<Module<T>> clone() const override { return std::make_unique<GroupNorm>(*this); }
  void clear_cache() override {
    xhat_ = {};
    inv_std_.clear();
  }

 private:
  int groups_, channels_;
  double eps_;
  Parameter<T> gamma_, beta_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

template <typename T>
class ReLU final : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Module<T>> clone() const override { return std::make_unique<ReLU>(*this); }
  void clear_cache() override { out_ = {}; }

 private:
  Tensor<T> out_;
};

template <typename T>
class MaxPool2d final : public Module<T> {
 public:
  MaxPool2d(int kernel, int stride, int padding) : k_(kernel), stride_(stride), pad_(padding) {}
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Module<T>> clone() const override { return std::make_unique<MaxPool2d>(*this); }
  void clear_cache() override { argmax_.clear(); }

 private:
  int k_, stride_, pad_;
  int in_n_ = 0, in_c_ = 0, in_h_ = 0, in_w_ = 0;
  std::vector<std::size_t> argmax_;
};

/// N x C x H x W -> N x C x 1 x 1
template <typename T>
class GlobalAvgPool final : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Module<T>> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
};

/// Fully connected layer on flattened samples: N x in -> N x out x 1 x 1.
template <typename T>
class Linear final : public Module<T> {
 public:
  Linear(int in_features, int out_features, std::string name);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void reset_parameters(Rng& rng) override;
  std::unique_ptr<Module<T>> clone() const override { return std::make_unique<Linear>(*this); }
  void clear_cache() override { input_ = {}; }

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  int in_, out_;
  Parameter<T> weight_;  // out x in
  Parameter<T> bias_;
  Tensor<T> input_;
};

template <typename T>
class Sequential final : public Module<T> {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential&) = delete;

  void add(std::unique_ptr<Module<T>> m) { layers_.push_back(std::move(m)); }
  template <typename M, typename... Args>
  M& emplace(Args&&... args) {
    auto m = std::make_unique<M>(std::forward<Args>(args)...);
    M& ref = *m;
    layers_.push_back(std::move(m));
    return ref;
  }
  std::size_t size() const { return layers_.size(); }

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void reset_parameters(Rng& rng) override;
  std::unique_ptr<Module<T>> clone() const override { return std::make_unique<Sequential>(*this); }
  void clear_cache() override;

 private:
  std::vector<std::unique_ptr<Module<T>>> layers_;
};

/// ResNet bottleneck: 1x1 -> 3x3(stride) -> 1x1 (x4 expansion) plus projection shortcut.
template <typename T>
class Bottleneck final : public Module<T> {
 public:
  Bottleneck(int in_channels, int width, int stride, int groups, const std::string& name);
  Bottleneck(const Bottleneck& other);
  Bottleneck& operator=(const Bottleneck&) = delete;

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void reset_parameters(Rng& rng) override;
  std::unique_ptr<Module<T>> clone() const override { return std::make_unique<Bottleneck>(*this); }
  void clear_cache() override;

  int out_channels() const { return out_channels_; }

 private:
  int out_channels_;
  Sequential<T> main_;
  std::unique_ptr<Sequential<T>> shortcut_;
  ReLU<T> relu_;
};

}  // namespace aerossl::nn
