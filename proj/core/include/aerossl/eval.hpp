#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aerossl/encoder.hpp"
#include "aerossl/infonce.hpp"
#include "aerossl/tiling.hpp"

namespace aerossl {

/// Label encoding used by the classifiers: foreground is the positive class.
inline constexpr int kBackgroundClass = 0;
inline constexpr int kForegroundClass = 1;

struct Metrics {
  double top1 = 0;          // percent
  double precision_fg = 0;  // percent; 0 when nothing was predicted foreground
  double recall_fg = 0;     // percent
  /// Set when there were no foreground predictions, so precision is undefined and reported as 0.
  bool precision_undefined = false;
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels);

struct LabeledSet {
  std::vector<std::string> ids;
  std::vector<Image8> images;
  std::vector<int> labels;
};

struct DownstreamData {
  LabeledSet train, val, test;
};

/// Materializes the labeled splits. The train split is subsampled to
/// `label_fraction` per class with `subsample_labels`.
DownstreamData load_downstream(const DatasetManifest& manifest, const std::vector<SourceFrame>& frames,
                               double label_fraction, std::uint64_t subsample_seed);

/// Square crops of side `crop`: centered, or at a seeded random offset per image.
std::vector<ImageF> make_crops(const std::vector<Image8>& images, int crop, bool random, std::uint64_t seed);

/// Pooled backbone features (N x d) of the given crops. Parameters are not touched.
Mat extract_features(Encoder<float>& encoder, const std::vector<ImageF>& crops, const InputNorm& norm,
                     int batch = 64);

struct ProbeConfig {
  double lr = 30.0;
  int epochs = 100;
  int batch = 256;
  double momentum = 0.9;
  double weight_decay = 0.0;
  /// none, l2 or standardize
  std::string feature_norm = "l2";
  std::uint64_t seed = 0;
};

struct ProbeResult {
  std::string mode;  // frozen or end_to_end
  double label_fraction = 1.0;
  Metrics metrics;
  std::vector<int> predictions;
};

/// Trains a softmax linear classifier on `train` features and evaluates it on `val`.
ProbeResult linear_probe(const Mat& train, const std::vector<int>& train_labels, const Mat& val,
                         const std::vector<int>& val_labels, const ProbeConfig& config, double label_fraction);

struct FinetuneConfig {
  double lr = 0.01;
  int epochs = 200;
  int batch = 256;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int crop = 224;
  std::uint64_t seed = 0;
};

/// Trains the backbone of `encoder` plus a new linear classifier end to end.
/// `encoder` is copied; the caller's parameters are not modified.
ProbeResult finetune_end_to_end(const Encoder<float>& encoder, const LabeledSet& train, const LabeledSet& val,
                                const InputNorm& norm, const FinetuneConfig& config, double label_fraction);

void append_results_csv(const std::string& path, const std::string& run_id, const ProbeResult& result);
void write_predictions_csv(const std::string& path, const LabeledSet& set, const std::vector<int>& predictions);

struct ResultRow {
  std::string run_id, mode;
  double fraction = 0, top1 = 0, prec_fg = 0, rec_fg = 0;
};
std::vector<ResultRow> read_results_csv(const std::string& path);

}  // namespace aerossl
