#include "aerossl/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace aerossl {

const char* to_string(PatchLabel label) {
  switch (label) {
    case PatchLabel::kUnlabeled: return "unlabeled";
    case PatchLabel::kBackground: return "background";
    case PatchLabel::kForeground: return "foreground";
  }
  return "?";
}

const char* to_string(Split split) {
  switch (split) {
    case Split::kPretrain: return "pretrain";
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

PatchLabel parse_label(const std::string& s) {
  if (s == "unlabeled") return PatchLabel::kUnlabeled;
  if (s == "background") return PatchLabel::kBackground;
  if (s == "foreground") return PatchLabel::kForeground;
  throw std::invalid_argument("unknown patch label '" + s + "'");
}

Split parse_split(const std::string& s) {
  if (s == "pretrain") return Split::kPretrain;
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + s + "'");
}

bool DatasetManifest::is_pretrain() const {
  return std::all_of(records.begin(), records.end(),
                     [](const PatchRecord& r) { return r.split == Split::kPretrain; });
}

std::vector<const PatchRecord*> DatasetManifest::select(Split split) const {
  std::vector<const PatchRecord*> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

std::vector<const PatchRecord*> DatasetManifest::select(Split split, PatchLabel label) const {
  std::vector<const PatchRecord*> out;
  for (const auto& r : records) {
    if (r.split == split && r.label == label) out.push_back(&r);
  }
  return out;
}

namespace {

void check_fits(const SourceFrame& frame, int size) {
  if (size <= 0 || size > frame.width() || size > frame.height()) {
    std::ostringstream msg;
    msg << "frame " << frame.frame_id << " is " << frame.width() << "x" << frame.height()
        << ", patch size " << size << " does not fit";
    throw CropError(msg.str());
  }
}

}  // namespace

std::vector<PatchRecord> random_crop_patches(const SourceFrame& frame, int n, int size, Rng& rng) {
  if (n < 1) throw std::invalid_argument("random_crop_patches: n must be >= 1");
  check_fits(frame, size);
  std::vector<PatchRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    PatchRecord r;
    r.patch_id = frame.frame_id + "_r" + std::to_string(i);
    r.frame_id = frame.frame_id;
    r.off_x = uniform_int(rng, 0, frame.width() - size);
    r.off_y = uniform_int(rng, 0, frame.height() - size);
    r.w = r.h = size;
    out.push_back(std::move(r));
  }
  return out;
}

int grid_stride(int size, double overlap_fraction) {
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw std::invalid_argument("overlap fraction must lie in [0, 1)");
  }
  const int stride = static_cast<int>(std::floor(size * (1.0 - overlap_fraction) + 1e-9));
  if (stride <= 0) throw CropError("overlap grid stride computes to 0");
  return stride;
}

int grid_positions(int extent, int size, int stride) {
  if (extent < size) return 0;
  return (extent - size) / stride + 1;
}

std::vector<PatchRecord> overlap_crop_patches(const SourceFrame& frame, int size, double overlap_fraction) {
  check_fits(frame, size);
  const int stride = grid_stride(size, overlap_fraction);
  const int cols = grid_positions(frame.width(), size, stride);
  const int rows = grid_positions(frame.height(), size, stride);
  std::vector<PatchRecord> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      PatchRecord p;
      p.patch_id = frame.frame_id + "_g" + std::to_string(r) + "_" + std::to_string(c);
      p.frame_id = frame.frame_id;
      p.off_x = c * stride;
      p.off_y = r * stride;
      p.w = p.h = size;
      out.push_back(std::move(p));
    }
  }
  return out;
}

DatasetManifest build_pretrain_set(const std::vector<SourceFrame>& frames, const PretrainSetOptions& options) {
  if (frames.empty()) throw std::invalid_argument("build_pretrain_set: no frames");
  DatasetManifest manifest;
  manifest.seed = options.seed;
  manifest.split_ratio = {0, 0, 0};
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const SourceFrame& frame = frames[i];
    Rng rng = make_rng(options.seed, {i});
    auto patches = random_crop_patches(frame, options.patches_per_frame, options.patch_size, rng);
    if (options.overlap_on_animal_frames && !frame.annotations.empty()) {
      auto grid = overlap_crop_patches(frame, options.patch_size, options.overlap_fraction);
      patches.insert(patches.end(), std::make_move_iterator(grid.begin()), std::make_move_iterator(grid.end()));
    }
    for (auto& p : patches) {
      p.label = PatchLabel::kUnlabeled;
      p.split = Split::kPretrain;
      manifest.records.push_back(std::move(p));
    }
  }
  return manifest;
}

namespace {

struct SplitFrames {
  std::array<std::vector<std::size_t>, 3> members;  // train, val, test
};

SplitFrames split_frames(const std::vector<SourceFrame>& frames, const std::array<int, 3>& ratio,
                         std::uint64_t seed) {
  const int total = ratio[0] + ratio[1] + ratio[2];
  if (ratio[0] <= 0 || ratio[1] <= 0 || ratio[2] <= 0) {
    throw std::invalid_argument("split ratio entries must be positive");
  }
  // Annotated and empty frames are split separately so every split sees animals.
  std::array<std::vector<std::size_t>, 2> groups;
  for (std::size_t i = 0; i < frames.size(); ++i) groups[frames[i].annotations.empty() ? 1 : 0].push_back(i);

  SplitFrames out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& group = groups[g];
    Rng rng = make_rng(seed, {g});
    std::shuffle(group.begin(), group.end(), rng);
    const auto n = static_cast<double>(group.size());
    const auto n_val = static_cast<std::size_t>(std::lround(n * ratio[1] / total));
    const auto n_test = static_cast<std::size_t>(std::lround(n * ratio[2] / total));
    const std::size_t n_train = group.size() - std::min(group.size(), n_val + n_test);
    for (std::size_t k = 0; k < group.size(); ++k) {
      const int s = k < n_train ? 0 : (k < n_train + n_val ? 1 : 2);
      out.members[s].push_back(group[k]);
    }
  }
  for (auto& m : out.members) std::sort(m.begin(), m.end());
  return out;
}

}  // namespace

DatasetManifest build_downstream_set(const std::vector<SourceFrame>& frames, const DownstreamSetOptions& options) {
  if (frames.empty()) throw std::invalid_argument("build_downstream_set: no frames");
  if (options.fg_size <= 0 || options.bg_size <= 0) throw std::invalid_argument("crop sizes must be positive");
  if (options.bg_per_fg <= 0) throw std::invalid_argument("background-per-foreground ratio must be positive");
  const auto& seeds = options.crop_seeds;
  if (seeds[0] == seeds[1] || seeds[0] == seeds[2] || seeds[1] == seeds[2]) {
    throw std::invalid_argument("train/val/test crop seeds must be distinct");
  }

  const SplitFrames parts = split_frames(frames, options.split_ratio, options.split_seed);
  static constexpr std::array<Split, 3> kSplits{Split::kTrain, Split::kVal, Split::kTest};

  DatasetManifest manifest;
  manifest.split_ratio = options.split_ratio;
  manifest.seed = options.split_seed;
  std::size_t train_fg = 0, train_bg = 0;

  for (std::size_t s = 0; s < 3; ++s) {
    const auto& members = parts.members[s];
    const bool any_annotated = std::any_of(members.begin(), members.end(),
                                           [&](std::size_t i) { return !frames[i].annotations.empty(); });
    if (!any_annotated) {
      throw std::invalid_argument(std::string("split '") + to_string(kSplits[s]) + "' has no annotated frame");
    }
    Rng rng = make_rng(seeds[s]);

    std::size_t n_fg = 0;
    for (std::size_t idx : members) {
      const SourceFrame& frame = frames[idx];
      for (std::size_t b = 0; b < frame.annotations.size(); ++b) {
        const BoundingBox& box = frame.annotations[b];
        if (box.w > options.fg_size || box.h > options.fg_size) {
          manifest.skipped.push_back({frame.frame_id, box, "box larger than foreground crop"});
          continue;
        }
        if (frame.width() < options.fg_size || frame.height() < options.fg_size) {
          manifest.skipped.push_back({frame.frame_id, box, "frame smaller than foreground crop"});
          continue;
        }
        // Uniform over offsets that keep the whole box inside the crop.
        const int x_lo = std::max(0, box.x + box.w - options.fg_size);
        const int x_hi = std::min(box.x, frame.width() - options.fg_size);
        const int y_lo = std::max(0, box.y + box.h - options.fg_size);
        const int y_hi = std::min(box.y, frame.height() - options.fg_size);
        PatchRecord r;
        r.patch_id = frame.frame_id + "_fg" + std::to_string(b);
        r.frame_id = frame.frame_id;
        r.off_x = uniform_int(rng, x_lo, x_hi);
        r.off_y = uniform_int(rng, y_lo, y_hi);
        r.w = r.h = options.fg_size;
        r.label = PatchLabel::kForeground;
        r.split = kSplits[s];
        manifest.records.push_back(std::move(r));
        ++n_fg;
      }
    }

    const std::size_t n_bg = s == 0 ? static_cast<std::size_t>(std::lround(n_fg * options.bg_per_fg)) : n_fg;
    std::vector<std::size_t> candidates;
    for (std::size_t idx : members) {
      if (frames[idx].width() >= options.bg_size && frames[idx].height() >= options.bg_size) candidates.push_back(idx);
    }
    if (n_bg > 0 && candidates.empty()) {
      throw std::runtime_error(std::string("insufficient background area in split '") + to_string(kSplits[s]) +
                               "': no frame fits a background crop");
    }
    for (std::size_t j = 0; j < n_bg; ++j) {
      bool placed = false;
      for (int attempt = 0; attempt < options.max_bg_attempts && !placed; ++attempt) {
        const SourceFrame& frame = frames[candidates[static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<int>(candidates.size()) - 1))]];
        const BoundingBox rect{uniform_int(rng, 0, frame.width() - options.bg_size),
                               uniform_int(rng, 0, frame.height() - options.bg_size), options.bg_size,
                               options.bg_size};
        const bool clear = std::none_of(frame.annotations.begin(), frame.annotations.end(),
                                        [&](const BoundingBox& box) { return rect.intersects(box); });
        if (!clear) continue;
        PatchRecord r;
        r.patch_id = frame.frame_id + "_bg" + std::to_string(j);
        r.frame_id = frame.frame_id;
        r.off_x = rect.x;
        r.off_y = rect.y;
        r.w = r.h = options.bg_size;
        r.label = PatchLabel::kBackground;
        r.split = kSplits[s];
        manifest.records.push_back(std::move(r));
        placed = true;
      }
      if (!placed) {
        throw std::runtime_error(std::string("insufficient background area in split '") + to_string(kSplits[s]) +
                                 "' after " + std::to_string(options.max_bg_attempts) + " attempts");
      }
    }
    if (s == 0) {
      train_fg = n_fg;
      train_bg = n_bg;
    }
  }
  manifest.fg_bg_ratio = train_bg > 0 ? static_cast<double>(train_fg) / static_cast<double>(train_bg) : 0.0;
  return manifest;
}

DatasetManifest subsample_labels(const DatasetManifest& manifest, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("label fraction must lie in (0, 1]");
  std::vector<std::size_t> fg, bg;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    if (r.split != Split::kTrain) continue;
    if (r.label == PatchLabel::kForeground) fg.push_back(i);
    if (r.label == PatchLabel::kBackground) bg.push_back(i);
  }
  if (fg.empty() && bg.empty()) throw std::invalid_argument("subsample_labels: manifest has no labeled train split");

  std::vector<bool> keep(manifest.records.size(), true);
  std::uint64_t stream = 0;
  for (auto* cls : {&fg, &bg}) {
    const auto n_keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(cls->size()) - 1e-9));
    Rng rng = make_rng(seed, {stream++});
    std::vector<std::size_t> order = *cls;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = n_keep; k < order.size(); ++k) keep[order[k]] = false;
  }
  const bool fg_left = std::any_of(fg.begin(), fg.end(), [&](std::size_t i) { return keep[i]; });
  if (!fg_left) throw std::invalid_argument("subsample_labels: fraction leaves no foreground records");

  DatasetManifest out = manifest;
  out.records.clear();
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (keep[i]) out.records.push_back(manifest.records[i]);
  }
  return out;
}

std::vector<Image8> materialize(const std::vector<const PatchRecord*>& records,
                                const std::vector<SourceFrame>& frames) {
  std::unordered_map<std::string, const SourceFrame*> by_id;
  for (const auto& f : frames) by_id.emplace(f.frame_id, &f);
  std::vector<Image8> out;
  out.reserve(records.size());
  for (const PatchRecord* r : records) {
    auto it = by_id.find(r->frame_id);
    if (it == by_id.end()) throw std::invalid_argument("patch " + r->patch_id + " references unknown frame " + r->frame_id);
    out.push_back(crop(it->second->pixels, r->off_x, r->off_y, r->w, r->h));
  }
  return out;
}

std::vector<Image8> materialize(const DatasetManifest& manifest, const std::vector<SourceFrame>& frames) {
  std::vector<const PatchRecord*> all;
  all.reserve(manifest.records.size());
  for (const auto& r : manifest.records) all.push_back(&r);
  return materialize(all, frames);
}

}  // namespace aerossl
