#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "aerossl/augment.hpp"
#include "aerossl/cld.hpp"
#include "aerossl/encoder.hpp"
#include "aerossl/infonce.hpp"
#include "aerossl/optim.hpp"

namespace aerossl {

/// Fixed-capacity FIFO of unit-norm key features used as negatives. Before
/// `capacity` keys have been pushed, only the filled part is visible.
class FeatureQueue {
 public:
  FeatureQueue(int capacity, int dim);

  /// Replaces the oldest entries with `keys` (rows), oldest-first order kept.
  void push(const Mat& keys);
  /// Current entries, oldest first (size() x dim).
  Mat contents() const;

  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  int size() const { return fill_; }
  int write_ptr() const { return write_; }
  bool full() const { return fill_ == capacity_; }

  const Mat& storage() const { return storage_; }
  void restore(Mat storage, int fill, int write_ptr);

 private:
  int capacity_, dim_;
  Mat storage_;
  int fill_ = 0;
  int write_ = 0;
};

/// k = m * k + (1 - m) * q for every entry. Computed in double.
template <typename T>
void momentum_update(const std::vector<nn::Parameter<T>*>& query, const std::vector<nn::Parameter<T>*>& key,
                     double m) {
  if (!(m >= 0.0 && m < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (query.size() != key.size()) throw std::invalid_argument("momentum_update: parameter count mismatch");
  for (std::size_t i = 0; i < query.size(); ++i) {
    auto& q = query[i]->value;
    auto& k = key[i]->value;
    if (q.size() != k.size()) throw std::invalid_argument("momentum_update: shape mismatch in " + query[i]->name);
    for (std::size_t j = 0; j < q.size(); ++j) {
      k[j] = static_cast<T>(m * static_cast<double>(k[j]) + (1.0 - m) * static_cast<double>(q[j]));
    }
  }
}

/// Query and momentum (key) encoders. The key side never receives gradients.
template <typename T>
struct EncoderState {
  Encoder<T> query;
  Encoder<T> key;

  explicit EncoderState(Encoder<T> q) : query(std::move(q)), key(query) {}
};

/// Randomly initialized query encoder with an identical key copy.
EncoderState<float> build_encoder(const BackboneSpec& backbone, const HeadSpec& head, std::uint64_t init_seed);

/// Which loss terms a step optimizes. Instance term: sum over query views v of
/// view_weights[v] * mean InfoNCE(q_v, k+). Group term (needs exactly two
/// views): cld.weight * 0.5 * [Lg(g1, C(g2)) + Lg(g2, C(g1))].
struct LossPlan {
  std::vector<double> view_weights{1.0};
  bool group = false;
  CldConfig cld;
};

struct ObjectiveResult {
  double total = 0;
  double instance = 0;
  double group = 0;
  std::vector<double> view_losses;
  std::vector<ClusterResult> clusters;  // two entries when the group term is active
};

struct ObjectiveOptions {
  double tau_q = 0.2;
  /// Reuse these clusterings instead of running k-means (must hold two entries).
  const std::vector<ClusterResult>* fixed_clusters = nullptr;
  bool backward = true;
};

/// Forward pass of `views` (V*N samples, view-major) through the query
/// encoder, loss evaluation against `keys` (N x m) and `negatives`, and,
/// if requested, backpropagation into the encoder's parameter gradients.
template <typename T>
ObjectiveResult evaluate_objective(Encoder<T>& query, const nn::Tensor<T>& views, const Mat& keys,
                                   const Mat& negatives, const LossPlan& plan, const ObjectiveOptions& options);

struct StepOptions {
  double tau_q = 0.2;
  double momentum = 0.999;
  double lr = 0.0075;
  InputNorm norm;
};

struct StepResult {
  double loss = 0;
  double loss_inst = 0;
  double loss_group = 0;
  std::vector<double> view_losses;
  std::vector<ClusterResult> clusters;
};

template <typename T>
Mat encode_keys(Encoder<T>& key, const std::vector<const ImageF*>& images, const InputNorm& norm);

/// One training transaction: keys from the momentum encoder, loss and
/// gradients on the query encoder, optimizer update of the query side only,
/// momentum blend of the key side, then enqueue of the keys.
template <typename T>
StepResult contrastive_step(const std::vector<std::vector<const ImageF*>>& query_views,
                            const std::vector<const ImageF*>& key_images, const LossPlan& plan,
                            EncoderState<T>& state, FeatureQueue& queue, BasicSgd<T>& optimizer,
                            const StepOptions& options);

/// MoCo step on (view1, key) of each bundle.
template <typename T>
StepResult moco_step(const std::vector<ViewBundle>& batch, EncoderState<T>& state, FeatureQueue& queue,
                     BasicSgd<T>& optimizer, const StepOptions& options);

template <typename T>
Mat tensor_to_mat(const nn::Tensor<T>& t);
template <typename T>
nn::Tensor<T> mat_to_tensor(const Mat& m);

}  // namespace aerossl
