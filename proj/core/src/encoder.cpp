#include "aerossl/encoder.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace aerossl {

namespace {

int groups_for(int channels, int preferred) {
  int g = std::min(preferred, channels);
  while (channels % g != 0) --g;
  return g;
}

template <typename T>
void add_resnet_stage(nn::Sequential<T>& net, int& in_channels, int width, int blocks, int stride, int stage) {
  for (int b = 0; b < blocks; ++b) {
    auto& block = net.template emplace<nn::Bottleneck<T>>(in_channels, width, b == 0 ? stride : 1, 32,
                                                          "layer" + std::to_string(stage) + "." + std::to_string(b));
    in_channels = block.out_channels();
  }
}

}  // namespace

int backbone_feature_dim(const BackboneSpec& spec) {
  if (spec.id == "desk_cnn") {
    if (spec.widths.size() != 4) throw std::invalid_argument("desk_cnn expects 4 block widths");
    return spec.widths.back();
  }
  if (spec.id == "resnet50") return 2048;
  throw std::invalid_argument("unknown backbone '" + spec.id + "' (expected desk_cnn or resnet50)");
}

template <typename T>
std::unique_ptr<nn::Sequential<T>> build_backbone(const BackboneSpec& spec, int* feature_dim) {
  auto net = std::make_unique<nn::Sequential<T>>();
  if (spec.id == "desk_cnn") {
    if (spec.widths.size() != 4) throw std::invalid_argument("desk_cnn expects 4 block widths");
    int in = 3;
    for (std::size_t i = 0; i < spec.widths.size(); ++i) {
      const int out = spec.widths[i];
      const std::string name = "block" + std::to_string(i + 1);
      net->template emplace<nn::Conv2d<T>>(in, out, 3, i == 0 ? 1 : 2, 1, false, name + ".conv");
      net->template emplace<nn::GroupNorm<T>>(groups_for(out, spec.norm_groups), out, name + ".gn");
      net->template emplace<nn::ReLU<T>>();
      in = out;
    }
    net->template emplace<nn::GlobalAvgPool<T>>();
    if (feature_dim) *feature_dim = in;
  } else if (spec.id == "resnet50") {
    net->template emplace<nn::Conv2d<T>>(3, 64, 7, 2, 3, false, "stem.conv");
    net->template emplace<nn::GroupNorm<T>>(32, 64, "stem.gn");
    net->template emplace<nn::ReLU<T>>();
    net->template emplace<nn::MaxPool2d<T>>(3, 2, 1);
    int in = 64;
    add_resnet_stage(*net, in, 64, 3, 1, 1);
    add_resnet_stage(*net, in, 128, 4, 2, 2);
    add_resnet_stage(*net, in, 256, 6, 2, 3);
    add_resnet_stage(*net, in, 512, 3, 2, 4);
    net->template emplace<nn::GlobalAvgPool<T>>();
    if (feature_dim) *feature_dim = in;
  } else {
    throw std::invalid_argument("unknown backbone '" + spec.id + "' (expected desk_cnn or resnet50)");
  }
  return net;
}

template <typename T>
Encoder<T>::Encoder(const BackboneSpec& backbone, const HeadSpec& head)
    : Encoder(build_backbone<T>(backbone, nullptr), backbone_feature_dim(backbone), head) {}

template <typename T>
Encoder<T>::Encoder(std::unique_ptr<nn::Sequential<T>> backbone, int feature_dim, const HeadSpec& head)
    : backbone_(std::move(backbone)), feature_dim_(feature_dim), head_(head),
      hidden_(feature_dim, head.hidden, "head.hidden"),
      inst_out_(head.hidden, head.proj_dim, "head.instance"),
      group_out_(head.hidden, head.proj_dim, "head.group") {}

template <typename T>
Encoder<T>::Encoder(const Encoder& other)
    : backbone_(std::make_unique<nn::Sequential<T>>(*other.backbone_)), feature_dim_(other.feature_dim_),
      head_(other.head_), hidden_(other.hidden_), relu_(other.relu_), inst_out_(other.inst_out_),
      group_out_(other.group_out_) {}

template <typename T>
void Encoder<T>::reset_parameters(Rng& rng) {
  backbone_->reset_parameters(rng);
  hidden_.reset_parameters(rng);
  inst_out_.reset_parameters(rng);
  group_out_.reset_parameters(rng);
}

template <typename T>
typename Encoder<T>::Output Encoder<T>::forward(const nn::Tensor<T>& x, bool with_group) {
  Output out;
  out.features = backbone_->forward(x);
  hidden_act_ = relu_.forward(hidden_.forward(out.features));
  out.inst = inst_out_.forward(hidden_act_);
  if (with_group) out.group = group_out_.forward(hidden_act_);
  return out;
}

template <typename T>
void Encoder<T>::backward(const nn::Tensor<T>* d_inst, const nn::Tensor<T>* d_group) {
  if (!d_inst && !d_group) return;
  nn::Tensor<T> d_hidden;
  if (d_inst) d_hidden = inst_out_.backward(*d_inst);
  if (d_group) {
    nn::Tensor<T> g = group_out_.backward(*d_group);
    if (d_hidden.data.empty()) {
      d_hidden = std::move(g);
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) d_hidden.data[i] += g.data[i];
    }
  }
  backbone_->backward(hidden_.backward(relu_.backward(d_hidden)));
}

template <typename T>
std::vector<nn::Parameter<T>*> Encoder<T>::parameters() {
  std::vector<nn::Parameter<T>*> out = backbone_->parameters();
  hidden_.collect_parameters(out);
  inst_out_.collect_parameters(out);
  group_out_.collect_parameters(out);
  return out;
}

template <typename T>
void Encoder<T>::zero_grad() {
  for (auto* p : parameters()) std::fill(p->grad.begin(), p->grad.end(), T{});
}

template <typename T>
void Encoder<T>::clear_cache() {
  backbone_->clear_cache();
  hidden_.clear_cache();
  relu_.clear_cache();
  inst_out_.clear_cache();
  group_out_.clear_cache();
  hidden_act_ = {};
}

InputNorm compute_input_norm(const std::vector<Image8>& images) {
  std::array<double, 3> sum{}, sq{};
  double count = 0;
  for (const auto& img : images) {
    const auto& d = img.data();
    for (std::size_t i = 0; i < d.size(); i += 3) {
      for (int c = 0; c < 3; ++c) {
        const double v = d[i + c] / 255.0;
        sum[c] += v;
        sq[c] += v * v;
      }
    }
    count += static_cast<double>(d.size() / 3);
  }
  InputNorm norm;
  if (count == 0) return norm;
  for (int c = 0; c < 3; ++c) {
    norm.mean[c] = sum[c] / count;
    norm.std[c] = std::max(1e-3, std::sqrt(std::max(0.0, sq[c] / count - norm.mean[c] * norm.mean[c])));
  }
  return norm;
}

template <typename T>
nn::Tensor<T> images_to_tensor(const std::vector<const ImageF*>& images, const InputNorm& norm) {
  if (images.empty()) return {};
  const int W = images.front()->width(), H = images.front()->height();
  nn::Tensor<T> t(static_cast<int>(images.size()), 3, H, W);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageF& img = *images[i];
    if (img.width() != W || img.height() != H) throw std::invalid_argument("images_to_tensor: mixed image sizes");
    T* dst = t.sample(static_cast<int>(i));
    for (int c = 0; c < 3; ++c) {
      const double scale = 1.0 / (255.0 * norm.std[c]);
      const double shift = norm.mean[c] / norm.std[c];
      T* plane = dst + static_cast<std::size_t>(c) * H * W;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) plane[y * W + x] = static_cast<T>(img.at(x, y, c) * scale - shift);
      }
    }
  }
  return t;
}

std::size_t parameter_count(const std::vector<nn::Parameter<float>*>& params) {
  return std::accumulate(params.begin(), params.end(), std::size_t{0},
                         [](std::size_t acc, const nn::Parameter<float>* p) { return acc + p->value.size(); });
}

template std::unique_ptr<nn::Sequential<float>> build_backbone<float>(const BackboneSpec&, int*);
template std::unique_ptr<nn::Sequential<double>> build_backbone<double>(const BackboneSpec&, int*);
template class Encoder<float>;
template class Encoder<double>;
template nn::Tensor<float> images_to_tensor<float>(const std::vector<const ImageF*>&, const InputNorm&);
template nn::Tensor<double> images_to_tensor<double>(const std::vector<const ImageF*>&, const InputNorm&);

}  // namespace aerossl
