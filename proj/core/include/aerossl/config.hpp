#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aerossl/augment.hpp"
#include "aerossl/cld.hpp"
#include "aerossl/encoder.hpp"
#include "aerossl/mixgeo.hpp"
#include "aerossl/tiling.hpp"

namespace aerossl {

/// The five pretraining model variants.
enum class Strategy { kMocoV2, kMocoCld, kMocoGeo, kGeoCld, kMixCo };

Strategy parse_strategy(const std::string& name);
const char* to_string(Strategy s);
ViewStrategy view_strategy(Strategy s);
const std::vector<Strategy>& all_strategies();

/// Loss terms a strategy optimizes.
struct LossWiring {
  bool group = false;    // cross-level group term
  bool two_views = false;  // symmetric instance term over two query views
  bool mixture = false;  // mixture branch with probability p
};
LossWiring wiring_for(Strategy s);

struct EvalConfig {
  double label_fraction = 0.1;
  std::uint64_t subsample_seed = 0;
  int eval_crop = 224;
  double probe_lr = 30.0;
  int probe_epochs = 100;
  int probe_batch = 256;
  double probe_momentum = 0.9;
  double probe_weight_decay = 0.0;
  /// Feature scaling before the linear probe: none, l2 or standardize.
  std::string probe_feature_norm = "l2";
  double finetune_lr = 0.01;
  int finetune_epochs = 200;
  int finetune_batch = 256;
  double finetune_weight_decay = 1e-4;
};

struct TilingConfig {
  int tile_size = 256;
  int tiles_per_frame = 4;
  bool overlap_on_animal_frames = true;
  double overlap_fraction = 0.5;
  int fg_size = 224;
  int bg_size = 512;
  double bg_per_fg = 18.0;
};

struct RunConfig {
  Strategy strategy = Strategy::kMocoV2;
  bool desk = false;

  std::string frames_dir;
  std::string pretrain_manifest;
  std::string downstream_manifest;

  int epochs = 200;
  int batch_size = 64;
  /// Initial learning rate; 0 means 0.03 * batch_size / 256.
  double lr = 0.0;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;

  double tau_q = 0.2;
  double momentum = 0.999;
  int queue_size = 4096;

  BackboneSpec backbone;
  HeadSpec head;
  CldConfig cld;
  MixConfig mix;
  AugPolicy aug;
  TilingConfig tiling;
  SynthConfig synth;
  EvalConfig eval;

  std::uint64_t seed = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t augment_seed = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t kmeans_seed = 0;

  std::optional<InputNorm> norm;

  /// Epochs between checkpoints; 0 writes only the final one.
  int checkpoint_interval = 0;
  /// Epochs between kNN monitor evaluations; 0 disables the monitor.
  int knn_interval = 0;
  int knn_k = 20;
  double knn_t = 0.02;
  /// Single-threaded, reproducible run; wall_time is logged as 0.
  bool deterministic = true;

  double effective_lr() const { return lr > 0 ? lr : 0.03 * batch_size / 256.0; }
  void validate() const;
};

/// Lists every problem found while building a configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Flat key/value settings in the order they were given.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// Parses `key = value` lines; '#' starts a comment.
ConfigEntries parse_config_text(const std::string& text);
ConfigEntries read_config_file(const std::string& path);
/// Entries from environment variables AEROSSL_<KEY> for every known key.
ConfigEntries env_overrides(const char* prefix = "AEROSSL_");

/// Builds a configuration from defaults, the `preset` entry, desk scaling (if
/// `desk` is true) and then all remaining entries, later entries winning.
/// Unknown keys and bad values are reported together in one ConfigError.
RunConfig build_config(const ConfigEntries& entries);

/// Desk-scale defaults: small patches, small backbone and short schedules.
void apply_desk_defaults(RunConfig& cfg);

/// Every key with its effective value, one `key = value` line each.
std::string config_to_text(const RunConfig& cfg);
std::vector<std::string> config_keys();

}  // namespace aerossl
