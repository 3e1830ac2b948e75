#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aerossl/image.hpp"
#include "aerossl/rng.hpp"

namespace aerossl {

/// Pixel rectangle in frame coordinates.
struct BoundingBox {
  int x = 0, y = 0, w = 0, h = 0;

  bool intersects(const BoundingBox& o) const {
    return x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h;
  }
  bool contains(const BoundingBox& o) const {
    return o.x >= x && o.y >= y && o.x + o.w <= x + w && o.y + o.h <= y + h;
  }
  bool operator==(const BoundingBox&) const = default;
};

struct SourceFrame {
  std::string frame_id;
  Image8 pixels;
  std::vector<BoundingBox> annotations;

  int width() const { return pixels.width(); }
  int height() const { return pixels.height(); }
};

enum class PatchLabel { kUnlabeled, kBackground, kForeground };
enum class Split { kPretrain, kTrain, kVal, kTest };

const char* to_string(PatchLabel label);
const char* to_string(Split split);
PatchLabel parse_label(const std::string& s);
Split parse_split(const std::string& s);

struct PatchRecord {
  std::string patch_id;
  std::string frame_id;
  int off_x = 0, off_y = 0;
  int w = 0, h = 0;
  PatchLabel label = PatchLabel::kUnlabeled;
  Split split = Split::kPretrain;

  BoundingBox rect() const { return {off_x, off_y, w, h}; }
  bool operator==(const PatchRecord&) const = default;
};

struct SkippedBox {
  std::string frame_id;
  BoundingBox box;
  std::string reason;
};

struct DatasetManifest {
  std::vector<PatchRecord> records;
  std::array<int, 3> split_ratio{8, 1, 1};
  /// Foreground count over background count in the train split (0 for pretrain sets).
  double fg_bg_ratio = 0.0;
  std::uint64_t seed = 0;
  std::vector<SkippedBox> skipped;

  bool is_pretrain() const;
  std::vector<const PatchRecord*> select(Split split) const;
  std::vector<const PatchRecord*> select(Split split, PatchLabel label) const;
};

/// Thrown when a requested crop does not fit the frame.
class CropError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::vector<PatchRecord> random_crop_patches(const SourceFrame& frame, int n, int size, Rng& rng);

/// Row-major grid, left to right then top to bottom. A placement is kept only
/// when it lies fully inside the frame.
std::vector<PatchRecord> overlap_crop_patches(const SourceFrame& frame, int size,
                                              double overlap_fraction);

/// Number of grid placements along one axis of length `extent`.
int grid_positions(int extent, int size, int stride);
int grid_stride(int size, double overlap_fraction);

struct PretrainSetOptions {
  int patches_per_frame = 4;
  int patch_size = 256;
  bool overlap_on_animal_frames = true;
  double overlap_fraction = 0.5;
  std::uint64_t seed = 0;
};

DatasetManifest build_pretrain_set(const std::vector<SourceFrame>& frames,
                                   const PretrainSetOptions& options);

struct DownstreamSetOptions {
  int fg_size = 224;
  int bg_size = 512;
  /// Background crops per foreground crop in the train split.
  double bg_per_fg = 18.0;
  std::array<int, 3> split_ratio{8, 1, 1};
  std::uint64_t split_seed = 0;
  /// Cropping seeds for train, val and test. Must be pairwise distinct.
  std::array<std::uint64_t, 3> crop_seeds{1, 2, 3};
  int max_bg_attempts = 2000;
};

DatasetManifest build_downstream_set(const std::vector<SourceFrame>& frames,
                                     const DownstreamSetOptions& options);

/// Stratified ceil(fraction * n) per class over the train split; other splits untouched.
DatasetManifest subsample_labels(const DatasetManifest& manifest, double fraction,
                                 std::uint64_t seed);

struct SynthConfig {
  int frames = 200;
  int width = 512;
  int height = 512;
  /// Expected animals per 512x512 area in frames that carry animals.
  double blob_density = 2.0;
  /// Probability that a frame carries any animals at all.
  double prevalence = 1.0;
  double blob_min_radius = 3.0;
  double blob_max_radius = 6.0;
  /// Coarsest texture feature size in pixels.
  double texture_scale = 48.0;
  double texture_contrast = 28.0;
  /// Expected dark tree canopies per 512x512 area.
  double tree_density = 6.0;
  double tree_min_radius = 6.0;
  double tree_max_radius = 16.0;
  /// Per-frame global brightness spread (acquisition dates and sun angle).
  double illumination_jitter = 0.25;
  std::uint64_t seed = 0;
};

std::vector<SourceFrame> synth_generate(const SynthConfig& config);
SourceFrame synth_frame(const SynthConfig& config, int index);

/// Pixel data for every record, cropped from the frames it references.
std::vector<Image8> materialize(const DatasetManifest& manifest,
                                const std::vector<SourceFrame>& frames);
std::vector<Image8> materialize(const std::vector<const PatchRecord*>& records,
                                const std::vector<SourceFrame>& frames);

// Disk formats.
void write_manifest_csv(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest_csv(const std::string& path);
void write_annotations_csv(const std::string& path, const std::vector<SourceFrame>& frames);
/// Loads every *.png in `dir` (sorted by name) plus optional annotations.csv.
std::vector<SourceFrame> load_frames(const std::string& dir);
void save_frames(const std::string& dir, const std::vector<SourceFrame>& frames);
/// Writes `<patch_id>.png` for every record.
void save_patches(const std::string& dir, const DatasetManifest& manifest,
                  const std::vector<SourceFrame>& frames);
std::vector<Image8> load_patches(const std::string& dir,
                                 const std::vector<const PatchRecord*>& records);

}  // namespace aerossl
