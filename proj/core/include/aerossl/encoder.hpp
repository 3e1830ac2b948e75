#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "aerossl/image.hpp"
#include "aerossl/nn.hpp"

namespace aerossl {

struct BackboneSpec {
  /// "desk_cnn" or "resnet50".
  std::string id = "desk_cnn";
  /// Channel widths of the four desk_cnn blocks. The first block keeps full
  /// resolution, the others halve it.
  std::vector<int> widths{16, 32, 64, 128};
  int norm_groups = 8;
};

struct HeadSpec {
  int hidden = 2048;
  int proj_dim = 128;
};

int backbone_feature_dim(const BackboneSpec& spec);

/// Builds a backbone ending in global average pooling. Returns the module and
/// writes the pooled feature dimension to `feature_dim`.
template <typename T>
std::unique_ptr<nn::Sequential<T>> build_backbone(const BackboneSpec& spec, int* feature_dim);

/// Backbone plus the two projection heads. The instance head and the group
/// head share the hidden layer and differ in their final layer.
template <typename T>
class Encoder {
 public:
  Encoder(const BackboneSpec& backbone, const HeadSpec& head);
  Encoder(std::unique_ptr<nn::Sequential<T>> backbone, int feature_dim, const HeadSpec& head);
  Encoder(const Encoder& other);
  Encoder& operator=(const Encoder&) = delete;
  Encoder(Encoder&&) noexcept = default;
  Encoder& operator=(Encoder&&) noexcept = default;

  void reset_parameters(Rng& rng);

  int feature_dim() const { return feature_dim_; }
  int proj_dim() const { return head_.proj_dim; }
  const HeadSpec& head_spec() const { return head_; }

  struct Output {
    nn::Tensor<T> features;  // N x d x 1 x 1, pooled backbone output
    nn::Tensor<T> inst;      // N x proj x 1 x 1, unnormalized
    nn::Tensor<T> group;     // empty unless requested
  };

  nn::Tensor<T> features(const nn::Tensor<T>& x) { return backbone_->forward(x); }
  Output forward(const nn::Tensor<T>& x, bool with_group);

  /// Backpropagates head gradients (either may be null) down to the backbone.
  void backward(const nn::Tensor<T>* d_inst, const nn::Tensor<T>* d_group);
  /// Backpropagates a gradient on pooled features through the backbone only.
  void backward_features(const nn::Tensor<T>& d_features) { backbone_->backward(d_features); }

  /// Backbone parameters followed by head parameters, in a fixed order.
  std::vector<nn::Parameter<T>*> parameters();
  std::vector<nn::Parameter<T>*> backbone_parameters() { return backbone_->parameters(); }
  void zero_grad();
  void clear_cache();

 private:
  std::unique_ptr<nn::Sequential<T>> backbone_;
  int feature_dim_ = 0;
  HeadSpec head_;
  nn::Linear<T> hidden_;
  nn::ReLU<T> relu_;
  nn::Linear<T> inst_out_;
  nn::Linear<T> group_out_;
  nn::Tensor<T> hidden_act_;
};

/// Per-channel input normalization applied at the encoder input, on [0, 1] pixels.
struct InputNorm {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> std{0.25, 0.25, 0.25};
};

InputNorm compute_input_norm(const std::vector<Image8>& images);

template <typename T>
nn::Tensor<T> images_to_tensor(const std::vector<const ImageF*>& images, const InputNorm& norm);

std::size_t parameter_count(const std::vector<nn::Parameter<float>*>& params);

}  // namespace aerossl
