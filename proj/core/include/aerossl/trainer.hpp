#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aerossl/checkpoint.hpp"
#include "aerossl/config.hpp"
#include "aerossl/eval.hpp"

namespace aerossl {

struct MetricRow {
  long step = 0;
  int epoch = 0;
  double lr = 0;
  double loss = 0;
  double loss_inst = 0;
  double loss_group = 0;
  int clusters_occupied = 0;
  double inertia = 0;
  std::optional<double> knn_acc;
  double wall_time = 0;
};

/// Column layout of metrics.csv for a given wiring. Group columns appear only
/// when the group term is active.
std::string metrics_header(const LossWiring& wiring);
std::string format_metric_row(const MetricRow& row, const LossWiring& wiring);

/// Weighted kNN vote: each of the k most cosine-similar train rows votes for
/// its label with weight exp(sim / t). Rows must be unit-norm. Returns top-1
/// accuracy in percent.
double knn_monitor(const Mat& train, const std::vector<int>& train_labels, const Mat& eval,
                   const std::vector<int>& eval_labels, int k, double t);
std::vector<int> knn_predict(const Mat& train, const std::vector<int>& train_labels, const Mat& eval, int k,
                             double t);

struct PretrainOptions {
  /// Run directory for config echo, metrics.csv and checkpoints; empty writes nothing.
  std::string out_dir;
  /// Labeled patches for the kNN monitor (used when knn_interval > 0).
  const DownstreamData* knn_data = nullptr;
  /// Continue from this checkpoint.
  std::string resume_from;
  /// Stop (and checkpoint) once this many global steps are done; -1 runs to the end.
  long stop_after_step = -1;
  /// Loss terms to optimize instead of the strategy's own wiring.
  std::optional<LossWiring> wiring_override;
};

struct PretrainResult {
  std::optional<EncoderState<float>> state;
  InputNorm norm;
  std::vector<MetricRow> rows;
  long steps_done = 0;
  long total_steps = 0;
  std::string last_checkpoint;
};

PretrainResult pretrain(const RunConfig& config, const std::vector<Image8>& patches, const PretrainOptions& options);

/// Center-crop features of a labeled set through the backbone, L2-normalized per row.
Mat unit_features(Encoder<float>& encoder, const LabeledSet& set, const InputNorm& norm, int crop);

}  // namespace aerossl
