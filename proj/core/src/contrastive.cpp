#include "aerossl/contrastive.hpp"

#include <cmath>
#include <sstream>

namespace aerossl {

FeatureQueue::FeatureQueue(int capacity, int dim) : capacity_(capacity), dim_(dim) {
  if (capacity < 1) throw std::invalid_argument("queue capacity must be >= 1");
  if (dim < 1) throw std::invalid_argument("queue feature dim must be >= 1");
  storage_ = Mat::Zero(capacity, dim);
}

void FeatureQueue::push(const Mat& keys) {
  if (keys.rows() > capacity_) throw std::invalid_argument("queue push larger than capacity");
  if (keys.rows() > 0 && keys.cols() != dim_) throw std::invalid_argument("queue push: dimension mismatch");
  if (!rows_unit_norm(keys)) throw std::invalid_argument("queue push: keys must be unit-norm");
  for (Eigen::Index i = 0; i < keys.rows(); ++i) {
    storage_.row(write_) = keys.row(i);
    write_ = (write_ + 1) % capacity_;
    fill_ = std::min(fill_ + 1, capacity_);
  }
}

Mat FeatureQueue::contents() const {
  Mat out(fill_, dim_);
  const int start = fill_ < capacity_ ? 0 : write_;
  for (int i = 0; i < fill_; ++i) out.row(i) = storage_.row((start + i) % capacity_);
  return out;
}

void FeatureQueue::restore(Mat storage, int fill, int write_ptr) {
  if (storage.rows() != capacity_ || storage.cols() != dim_) throw std::invalid_argument("queue restore: shape");
  if (fill < 0 || fill > capacity_ || write_ptr < 0 || write_ptr >= capacity_) {
    throw std::invalid_argument("queue restore: bad pointers");
  }
  storage_ = std::move(storage);
  fill_ = fill;
  write_ = write_ptr;
}

EncoderState<float> build_encoder(const BackboneSpec& backbone, const HeadSpec& head, std::uint64_t init_seed) {
  Encoder<float> q(backbone, head);
  Rng rng = make_rng(init_seed, {});
  q.reset_parameters(rng);
  return EncoderState<float>(std::move(q));
}

template <typename T>
Mat tensor_to_mat(const nn::Tensor<T>& t) {
  const auto cols = static_cast<Eigen::Index>(t.sample_size());
  Mat m(t.n, cols);
  for (int i = 0; i < t.n; ++i) {
    const T* s = t.sample(i);
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<double>(s[j]);
  }
  return m;
}

template <typename T>
nn::Tensor<T> mat_to_tensor(const Mat& m) {
  nn::Tensor<T> t(static_cast<int>(m.rows()), static_cast<int>(m.cols()), 1, 1);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    T* s = t.sample(static_cast<int>(i));
    for (Eigen::Index j = 0; j < m.cols(); ++j) s[j] = static_cast<T>(m(i, j));
  }
  return t;
}

template <typename T>
ObjectiveResult evaluate_objective(Encoder<T>& query, const nn::Tensor<T>& views, const Mat& keys,
                                   const Mat& negatives, const LossPlan& plan, const ObjectiveOptions& options) {
  const int nviews = static_cast<int>(plan.view_weights.size());
  if (nviews < 1) throw std::invalid_argument("loss plan has no query views");
  if (views.n != nviews * keys.rows()) throw std::invalid_argument("query views do not match the key batch");
  if (plan.group && nviews != 2) throw std::invalid_argument("group loss needs exactly two query views");
  const Eigen::Index n = keys.rows();

  auto out = query.forward(views, plan.group);
  const Mat z = tensor_to_mat(out.inst);
  const Mat u = normalize_rows(z);
  Mat du = Mat::Zero(u.rows(), u.cols());

  ObjectiveResult r;
  for (int v = 0; v < nviews; ++v) {
    const BatchLoss l = batch_info_nce(u.middleRows(v * n, n), keys, negatives, options.tau_q);
    r.view_losses.push_back(l.loss);
    r.instance += plan.view_weights[static_cast<std::size_t>(v)] * l.loss;
    du.middleRows(v * n, n) = plan.view_weights[static_cast<std::size_t>(v)] * l.d_q;
  }
  r.total = r.instance;

  Mat zg, dgu;
  if (plan.group) {
    zg = tensor_to_mat(out.group);
    const Mat g = normalize_rows(zg);
    const Mat g1 = g.topRows(n), g2 = g.bottomRows(n);
    GroupLoss gl;
    if (options.fixed_clusters) {
      if (options.fixed_clusters->size() != 2) throw std::invalid_argument("fixed clusters need two entries");
      gl = dual_branch_cld(g1, g2, (*options.fixed_clusters)[0], (*options.fixed_clusters)[1], plan.cld.tau_g);
    } else {
      gl = dual_branch_cld(g1, g2, plan.cld);
    }
    r.group = gl.loss;
    r.total += plan.cld.weight * gl.loss;
    dgu.resize(g.rows(), g.cols());
    dgu.topRows(n) = plan.cld.weight * gl.d_g1;
    dgu.bottomRows(n) = plan.cld.weight * gl.d_g2;
    r.clusters = {std::move(gl.c1), std::move(gl.c2)};
  }

  if (options.backward) {
    const nn::Tensor<T> d_inst = mat_to_tensor<T>(normalize_rows_backward(z, du));
    if (plan.group) {
      const nn::Tensor<T> d_group = mat_to_tensor<T>(normalize_rows_backward(zg, dgu));
      query.backward(&d_inst, &d_group);
    } else {
      query.backward(&d_inst, nullptr);
    }
  }
  return r;
}

template <typename T>
Mat encode_keys(Encoder<T>& key, const std::vector<const ImageF*>& images, const InputNorm& norm) {
  auto out = key.forward(images_to_tensor<T>(images, norm), false);
  key.clear_cache();
  return normalize_rows(tensor_to_mat(out.inst));
}

template <typename T>
StepResult contrastive_step(const std::vector<std::vector<const ImageF*>>& query_views,
                            const std::vector<const ImageF*>& key_images, const LossPlan& plan,
                            EncoderState<T>& state, FeatureQueue& queue, BasicSgd<T>& optimizer,
                            const StepOptions& options) {
  if (key_images.empty()) throw std::invalid_argument("empty batch");
  if (query_views.size() != plan.view_weights.size()) throw std::invalid_argument("query view count != loss plan");
  std::vector<const ImageF*> stacked;
  for (const auto& v : query_views) {
    if (v.size() != key_images.size()) throw std::invalid_argument("query view batch size != key batch size");
    stacked.insert(stacked.end(), v.begin(), v.end());
  }

  const Mat keys = encode_keys(state.key, key_images, options.norm);
  const Mat negatives = queue.contents();
  ObjectiveOptions oo;
  oo.tau_q = options.tau_q;
  ObjectiveResult obj =
      evaluate_objective(state.query, images_to_tensor<T>(stacked, options.norm), keys, negatives, plan, oo);
  state.query.clear_cache();
  if (!std::isfinite(obj.total)) {
    std::ostringstream msg;
    msg << "non-finite loss (instance=" << obj.instance << ", group=" << obj.group << ")";
    throw std::runtime_error(msg.str());
  }
  optimizer.step(state.query.parameters(), options.lr);
  momentum_update(state.query.parameters(), state.key.parameters(), options.momentum);
  queue.push(keys);

  StepResult r;
  r.loss = obj.total;
  r.loss_inst = obj.instance;
  r.loss_group = obj.group;
  r.view_losses = std::move(obj.view_losses);
  r.clusters = std::move(obj.clusters);
  return r;
}

template <typename T>
StepResult moco_step(const std::vector<ViewBundle>& batch, EncoderState<T>& state, FeatureQueue& queue,
                     BasicSgd<T>& optimizer, const StepOptions& options) {
  std::vector<const ImageF*> q, k;
  for (const auto& b : batch) {
    if (!b.view1 || !b.key) throw std::invalid_argument("moco_step needs view1 and key views");
    q.push_back(&b.view1->image);
    k.push_back(&b.key->image);
  }
  LossPlan plan;
  return contrastive_step<T>({q}, k, plan, state, queue, optimizer, options);
}

#define AEROSSL_INSTANTIATE(T)                                                                                    \
  template Mat tensor_to_mat<T>(const nn::Tensor<T>&);                                                            \
  template nn::Tensor<T> mat_to_tensor<T>(const Mat&);                                                            \
  template ObjectiveResult evaluate_objective<T>(Encoder<T>&, const nn::Tensor<T>&, const Mat&, const Mat&,       \
                                                 const LossPlan&, const ObjectiveOptions&);                       \
  template Mat encode_keys<T>(Encoder<T>&, const std::vector<const ImageF*>&, const InputNorm&);                 \
  template StepResult contrastive_step<T>(const std::vector<std::vector<const ImageF*>>&,                         \
                                          const std::vector<const ImageF*>&, const LossPlan&, EncoderState<T>&,  \
                                          FeatureQueue&, BasicSgd<T>&, const StepOptions&);                       \
  template StepResult moco_step<T>(const std::vector<ViewBundle>&, EncoderState<T>&, FeatureQueue&, BasicSgd<T>&, \
                                   const StepOptions&);

AEROSSL_INSTANTIATE(float)
AEROSSL_INSTANTIATE(double)

#undef AEROSSL_INSTANTIATE

}  // namespace aerossl
