#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>

#include "aerossl/tiling.hpp"

namespace fs = std::filesystem;

namespace aerossl {

namespace {

constexpr const char* kManifestHeader = "patch_id,frame_id,off_x,off_y,w,h,label,split";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

int to_int(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw std::runtime_error(where + ": expected integer, got '" + s + "'");
  return v;
}

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace

void write_manifest_csv(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest '" + path + "'");
  const bool pretrain = manifest.is_pretrain();
  out << "# aerossl manifest v1\n";
  out << "# kind=" << (pretrain ? "pretrain" : "downstream") << "\n";
  out << "# seed=" << manifest.seed << "\n";
  if (!pretrain) {
    out << "# split_ratio=" << manifest.split_ratio[0] << ":" << manifest.split_ratio[1] << ":"
        << manifest.split_ratio[2] << "\n";
    out << "# fg_bg_ratio=" << format_double(manifest.fg_bg_ratio) << "\n";
    for (const auto& s : manifest.skipped) {
      out << "# skipped=" << s.frame_id << " " << s.box.x << " " << s.box.y << " " << s.box.w << " " << s.box.h
          << " " << s.reason << "\n";
    }
  }
  out << kManifestHeader << "\n";
  for (const auto& r : manifest.records) {
    out << r.patch_id << ',' << r.frame_id << ',' << r.off_x << ',' << r.off_y << ',' << r.w << ',' << r.h << ','
        << to_string(r.label) << ',' << to_string(r.split) << "\n";
  }
}

DatasetManifest read_manifest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest '" + path + "'");
  DatasetManifest manifest;
  std::string line;
  bool header_seen = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2);
      const std::string value = line.substr(eq + 1);
      if (key == "seed") {
        manifest.seed = std::stoull(value);
      } else if (key == "fg_bg_ratio") {
        manifest.fg_bg_ratio = std::stod(value);
      } else if (key == "split_ratio") {
        char c1 = 0, c2 = 0;
        std::istringstream rs(value);
        rs >> manifest.split_ratio[0] >> c1 >> manifest.split_ratio[1] >> c2 >> manifest.split_ratio[2];
      } else if (key == "skipped") {
        std::istringstream ss(value);
        SkippedBox s;
        ss >> s.frame_id >> s.box.x >> s.box.y >> s.box.w >> s.box.h;
        std::getline(ss >> std::ws, s.reason);
        manifest.skipped.push_back(std::move(s));
      }
      continue;
    }
    if (!header_seen) {
      if (line != kManifestHeader) throw std::runtime_error(where + ": unexpected manifest header");
      header_seen = true;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 8) throw std::runtime_error(where + ": expected 8 columns");
    PatchRecord r;
    r.patch_id = f[0];
    r.frame_id = f[1];
    r.off_x = to_int(f[2], where);
    r.off_y = to_int(f[3], where);
    r.w = to_int(f[4], where);
    r.h = to_int(f[5], where);
    r.label = parse_label(f[6]);
    r.split = parse_split(f[7]);
    manifest.records.push_back(std::move(r));
  }
  if (!header_seen) throw std::runtime_error(path + ": missing manifest header");
  if (manifest.is_pretrain()) manifest.split_ratio = {0, 0, 0};
  return manifest;
}

void write_annotations_csv(const std::string& path, const std::vector<SourceFrame>& frames) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write annotations '" + path + "'");
  out << "frame_id,x,y,w,h\n";
  for (const auto& f : frames) {
    for (const auto& b : f.annotations) out << f.frame_id << ',' << b.x << ',' << b.y << ',' << b.w << ',' << b.h << "\n";
  }
}

std::vector<SourceFrame> load_frames(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("frame directory '" + dir + "' does not exist");
  std::vector<fs::path> pngs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") pngs.push_back(entry.path());
  }
  std::sort(pngs.begin(), pngs.end());

  std::vector<SourceFrame> frames;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& p : pngs) {
    SourceFrame f;
    f.frame_id = p.stem().string();
    f.pixels = read_png(p.string());
    index.emplace(f.frame_id, frames.size());
    frames.push_back(std::move(f));
  }

  const fs::path ann = fs::path(dir) / "annotations.csv";
  if (fs::exists(ann)) {
    std::ifstream in(ann);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (lineno == 1 || line.empty()) continue;
      const std::string where = ann.string() + ":" + std::to_string(lineno);
      const auto f = split_csv(line);
      if (f.size() != 5) throw std::runtime_error(where + ": expected frame_id,x,y,w,h");
      auto it = index.find(f[0]);
      if (it == index.end()) throw std::runtime_error(where + ": unknown frame '" + f[0] + "'");
      SourceFrame& frame = frames[it->second];
      const BoundingBox box{to_int(f[1], where), to_int(f[2], where), to_int(f[3], where), to_int(f[4], where)};
      if (box.w <= 0 || box.h <= 0 || !BoundingBox{0, 0, frame.width(), frame.height()}.contains(box)) {
        throw std::runtime_error(where + ": box outside frame or empty");
      }
      frame.annotations.push_back(box);
    }
  }
  return frames;
}

void save_frames(const std::string& dir, const std::vector<SourceFrame>& frames) {
  fs::create_directories(dir);
  for (const auto& f : frames) write_png((fs::path(dir) / (f.frame_id + ".png")).string(), f.pixels);
  write_annotations_csv((fs::path(dir) / "annotations.csv").string(), frames);
}

void save_patches(const std::string& dir, const DatasetManifest& manifest, const std::vector<SourceFrame>& frames) {
  fs::create_directories(dir);
  const auto images = materialize(manifest, frames);
  for (std::size_t i = 0; i < images.size(); ++i) {
    write_png((fs::path(dir) / (manifest.records[i].patch_id + ".png")).string(), images[i]);
  }
}

std::vector<Image8> load_patches(const std::string& dir, const std::vector<const PatchRecord*>& records) {
  std::vector<Image8> out;
  out.reserve(records.size());
  for (const PatchRecord* r : records) {
    Image8 img = read_png((fs::path(dir) / (r->patch_id + ".png")).string());
    if (img.width() != r->w || img.height() != r->h) {
      throw std::runtime_error("patch " + r->patch_id + " size does not match manifest");
    }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace aerossl
