#include "aerossl/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "aerossl/rng.hpp"

namespace aerossl {

Strategy parse_strategy(const std::string& name) {
  if (name == "moco_v2") return Strategy::kMocoV2;
  if (name == "moco_cld") return Strategy::kMocoCld;
  if (name == "moco_geo") return Strategy::kMocoGeo;
  if (name == "geocld") return Strategy::kGeoCld;
  if (name == "mixco") return Strategy::kMixCo;
  throw std::invalid_argument("unknown preset '" + name + "' (expected moco_v2, moco_cld, moco_geo, geocld or mixco)");
}

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::kMocoV2: return "moco_v2";
    case Strategy::kMocoCld: return "moco_cld";
    case Strategy::kMocoGeo: return "moco_geo";
    case Strategy::kGeoCld: return "geocld";
    case Strategy::kMixCo: return "mixco";
  }
  return "?";
}

ViewStrategy view_strategy(Strategy s) {
  switch (s) {
    case Strategy::kMocoV2: return ViewStrategy::kMocoV2;
    case Strategy::kMocoCld: return ViewStrategy::kCld;
    case Strategy::kMocoGeo: return ViewStrategy::kGeo;
    case Strategy::kGeoCld: return ViewStrategy::kGeoCld;
    case Strategy::kMixCo: return ViewStrategy::kMixCo;
  }
  throw std::logic_error("bad strategy");
}

const std::vector<Strategy>& all_strategies() {
  static const std::vector<Strategy> all{Strategy::kMocoV2, Strategy::kMocoCld, Strategy::kMocoGeo, Strategy::kGeoCld,
                                         Strategy::kMixCo};
  return all;
}

LossWiring wiring_for(Strategy s) {
  LossWiring w;
  switch (s) {
    case Strategy::kMocoV2:
    case Strategy::kMocoGeo:
      break;
    case Strategy::kMocoCld:
    case Strategy::kGeoCld:
      w.group = true;
      w.two_views = true;
      break;
    case Strategy::kMixCo:
      w.two_views = true;
      w.mixture = true;
      break;
  }
  return w;
}

void RunConfig::validate() const {
  std::vector<std::string> p;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) p.push_back(msg);
  };
  check(epochs >= 1, "epochs must be >= 1");
  check(batch_size >= 1, "batch_size must be >= 1");
  check(lr >= 0, "lr must be >= 0 (0 selects 0.03 * batch_size / 256)");
  check(tau_q > 0, "tau_q must be positive");
  check(momentum >= 0 && momentum < 1, "momentum must be in [0, 1)");
  check(queue_size >= 1, "queue_size must be >= 1");
  check(head.hidden >= 1 && head.proj_dim >= 1, "head sizes must be >= 1");
  check(knn_k >= 1, "knn_k must be >= 1");
  check(knn_t > 0, "knn_t must be positive");
  check(checkpoint_interval >= 0 && knn_interval >= 0, "intervals must be >= 0");
  check(eval.label_fraction > 0 && eval.label_fraction <= 1, "label_fraction must be in (0, 1]");
  check(eval.probe_feature_norm == "none" || eval.probe_feature_norm == "l2" ||
            eval.probe_feature_norm == "standardize",
        "probe_feature_norm must be none, l2 or standardize");
  try {
    cld.validate();
  } catch (const std::exception& e) {
    p.push_back(e.what());
  }
  try {
    mix.validate();
  } catch (const std::exception& e) {
    p.push_back(e.what());
  }
  try {
    backbone_feature_dim(backbone);
  } catch (const std::exception& e) {
    p.push_back(e.what());
  }
  if (!p.empty()) throw ConfigError(p);
}

namespace {

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected true/false, got '" + v + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(trim(item)));
  if (out.empty()) throw std::invalid_argument("expected a comma-separated list");
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
std::string fmt_list(const T& values) {
  std::vector<std::string> parts;
  for (const auto& v : values) parts.push_back(fmt(static_cast<double>(v)));
  return join(parts, ",");
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define AEROSSL_INT(name, member)                                                                          \
  Field {                                                                                                   \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_number<int>(v); },                      \
        [](const RunConfig& c) { return std::to_string(c.member); }                                         \
  }
#define AEROSSL_DBL(name, member)                                                                          \
  Field {                                                                                                   \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_number<double>(v); },                   \
        [](const RunConfig& c) { return fmt(c.member); }                                                    \
  }
#define AEROSSL_BOOL(name, member)                                                                         \
  Field {                                                                                                   \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_bool(v); },                             \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }                         \
  }
#define AEROSSL_STR(name, member)                                                                          \
  Field {                                                                                                   \
    name, [](RunConfig& c, const std::string& v) { c.member = v; }, [](const RunConfig& c) { return c.member; } \
  }
#define AEROSSL_U64(name, member)                                                                          \
  Field {                                                                                                   \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_number<std::uint64_t>(v); },            \
        [](const RunConfig& c) { return std::to_string(c.member); }                                         \
  }

std::optional<std::array<double, 3>> parse_triplet(const std::string& v) {
  if (v == "auto") return std::nullopt;
  const auto xs = parse_list<double>(v);
  if (xs.size() != 3) throw std::invalid_argument("expected three comma-separated values or 'auto'");
  return std::array<double, 3>{xs[0], xs[1], xs[2]};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      Field{"preset", [](RunConfig& c, const std::string& v) { c.strategy = parse_strategy(v); },
            [](const RunConfig& c) { return std::string(to_string(c.strategy)); }},
      AEROSSL_BOOL("desk", desk),
      AEROSSL_STR("frames_dir", frames_dir),
      AEROSSL_STR("pretrain_manifest", pretrain_manifest),
      AEROSSL_STR("downstream_manifest", downstream_manifest),
      AEROSSL_INT("epochs", epochs),
      AEROSSL_INT("batch_size", batch_size),
      Field{"lr", [](RunConfig& c, const std::string& v) { c.lr = v == "auto" ? 0.0 : parse_number<double>(v); },
            [](const RunConfig& c) { return fmt(c.effective_lr()); }},
      AEROSSL_DBL("sgd_momentum", sgd_momentum),
      AEROSSL_DBL("weight_decay", weight_decay),
      AEROSSL_DBL("tau_q", tau_q),
      AEROSSL_DBL("tau_g", cld.tau_g),
      AEROSSL_DBL("momentum", momentum),
      AEROSSL_INT("queue_size", queue_size),
      AEROSSL_STR("backbone", backbone.id),
      Field{"backbone_widths", [](RunConfig& c, const std::string& v) { c.backbone.widths = parse_list<int>(v); },
            [](const RunConfig& c) { return fmt_list(c.backbone.widths); }},
      AEROSSL_INT("norm_groups", backbone.norm_groups),
      AEROSSL_INT("head_hidden", head.hidden),
      AEROSSL_INT("proj_dim", head.proj_dim),
      AEROSSL_INT("clusters", cld.clusters),
      AEROSSL_DBL("cld_weight", cld.weight),
      AEROSSL_INT("kmeans_iters", cld.kmeans_iters),
      AEROSSL_DBL("gamma", mix.gamma),
      AEROSSL_DBL("mix_p", mix.p),
      AEROSSL_DBL("beta", mix.alpha),
      AEROSSL_INT("crop_size", aug.crop_size),
      AEROSSL_DBL("hflip_p", aug.hflip_p),
      AEROSSL_DBL("blur_p", aug.blur_p),
      AEROSSL_INT("blur_kernel", aug.blur_kernel),
      AEROSSL_DBL("blur_sigma_min", aug.blur_sigma_min),
      AEROSSL_DBL("blur_sigma_max", aug.blur_sigma_max),
      AEROSSL_DBL("brightness", aug.brightness),
      AEROSSL_DBL("contrast", aug.contrast),
      AEROSSL_DBL("saturation", aug.saturation),
      AEROSSL_DBL("hue", aug.hue),
      AEROSSL_DBL("grayscale_p", aug.grayscale_p),
      Field{"rotations", [](RunConfig& c, const std::string& v) { c.aug.rotations = parse_list<int>(v); },
            [](const RunConfig& c) { return fmt_list(c.aug.rotations); }},
      AEROSSL_INT("tile_size", tiling.tile_size),
      AEROSSL_INT("tiles_per_frame", tiling.tiles_per_frame),
      AEROSSL_BOOL("overlap_on_animal_frames", tiling.overlap_on_animal_frames),
      AEROSSL_DBL("overlap_fraction", tiling.overlap_fraction),
      AEROSSL_INT("fg_size", tiling.fg_size),
      AEROSSL_INT("bg_size", tiling.bg_size),
      AEROSSL_DBL("bg_per_fg", tiling.bg_per_fg),
      AEROSSL_INT("synth_frames", synth.frames),
      AEROSSL_INT("synth_width", synth.width),
      AEROSSL_INT("synth_height", synth.height),
      AEROSSL_DBL("blob_density", synth.blob_density),
      AEROSSL_DBL("prevalence", synth.prevalence),
      AEROSSL_DBL("blob_min_radius", synth.blob_min_radius),
      AEROSSL_DBL("blob_max_radius", synth.blob_max_radius),
      AEROSSL_DBL("texture_scale", synth.texture_scale),
      AEROSSL_DBL("texture_contrast", synth.texture_contrast),
      AEROSSL_DBL("tree_density", synth.tree_density),
      AEROSSL_DBL("tree_min_radius", synth.tree_min_radius),
      AEROSSL_DBL("tree_max_radius", synth.tree_max_radius),
      AEROSSL_DBL("illumination_jitter", synth.illumination_jitter),
      AEROSSL_U64("seed", seed),
      AEROSSL_U64("data_seed", data_seed),
      AEROSSL_U64("augment_seed", augment_seed),
      AEROSSL_U64("init_seed", init_seed),
      AEROSSL_U64("kmeans_seed", kmeans_seed),
      AEROSSL_U64("synth_seed", synth.seed),
      AEROSSL_U64("subsample_seed", eval.subsample_seed),
      Field{"norm_mean",
            [](RunConfig& c, const std::string& v) {
              auto t = parse_triplet(v);
              if (!t) {
                c.norm.reset();
                return;
              }
              if (!c.norm) c.norm = InputNorm{};
              c.norm->mean = *t;
            },
            [](const RunConfig& c) { return c.norm ? fmt_list(c.norm->mean) : std::string("auto"); }},
      Field{"norm_std",
            [](RunConfig& c, const std::string& v) {
              auto t = parse_triplet(v);
              if (!t) {
                c.norm.reset();
                return;
              }
              for (double s : *t) {
                if (!(s > 0)) throw std::invalid_argument("norm_std entries must be positive");
              }
              if (!c.norm) c.norm = InputNorm{};
              c.norm->std = *t;
            },
            [](const RunConfig& c) { return c.norm ? fmt_list(c.norm->std) : std::string("auto"); }},
      AEROSSL_INT("checkpoint_interval", checkpoint_interval),
      AEROSSL_INT("knn_interval", knn_interval),
      AEROSSL_INT("knn_k", knn_k),
      AEROSSL_DBL("knn_t", knn_t),
      AEROSSL_BOOL("deterministic", deterministic),
      AEROSSL_DBL("label_fraction", eval.label_fraction),
      AEROSSL_INT("eval_crop", eval.eval_crop),
      AEROSSL_DBL("probe_lr", eval.probe_lr),
      AEROSSL_INT("probe_epochs", eval.probe_epochs),
      AEROSSL_INT("probe_batch", eval.probe_batch),
      AEROSSL_DBL("probe_momentum", eval.probe_momentum),
      AEROSSL_DBL("probe_weight_decay", eval.probe_weight_decay),
      AEROSSL_STR("probe_feature_norm", eval.probe_feature_norm),
      AEROSSL_DBL("finetune_lr", eval.finetune_lr),
      AEROSSL_INT("finetune_epochs", eval.finetune_epochs),
      AEROSSL_INT("finetune_batch", eval.finetune_batch),
      AEROSSL_DBL("finetune_weight_decay", eval.finetune_weight_decay),
  };
  return f;
}

#undef AEROSSL_INT
#undef AEROSSL_DBL
#undef AEROSSL_BOOL
#undef AEROSSL_STR
#undef AEROSSL_U64

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error("invalid configuration: " + join(problems, "; ")), problems_(std::move(problems)) {}

ConfigEntries parse_config_text(const std::string& text) {
  ConfigEntries out;
  std::vector<std::string> problems;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      problems.push_back("line " + std::to_string(lineno) + ": empty key");
      continue;
    }
    out.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  if (!problems.empty()) throw ConfigError(problems);
  return out;
}

ConfigEntries read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

ConfigEntries env_overrides(const char* prefix) {
  ConfigEntries out;
  for (const auto& f : fields()) {
    std::string name = prefix;
    for (char ch : f.key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (const char* v = std::getenv(name.c_str())) out.emplace_back(f.key, trim(v));
  }
  return out;
}

void apply_desk_defaults(RunConfig& cfg) {
  cfg.desk = true;
  cfg.epochs = 20;
  cfg.queue_size = 256;
  cfg.backbone.id = "desk_cnn";
  cfg.backbone.widths = {16, 32, 64, 128};
  cfg.head.hidden = 256;
  cfg.aug.crop_size = 48;
  cfg.aug.blur_kernel = 5;
  cfg.aug.blur_sigma_max = 0.5;
  cfg.tiling.tile_size = 64;
  cfg.tiling.tiles_per_frame = 8;
  cfg.tiling.overlap_on_animal_frames = false;
  cfg.tiling.fg_size = 48;
  cfg.tiling.bg_size = 96;
  cfg.eval.eval_crop = 48;
  cfg.eval.finetune_epochs = 20;
}

RunConfig build_config(const ConfigEntries& entries) {
  std::vector<std::string> problems;
  std::map<std::string, std::string> last;
  for (const auto& [k, v] : entries) {
    if (!find_field(k)) {
      problems.push_back("unknown key '" + k + "'");
      continue;
    }
    last[k] = v;
  }

  RunConfig cfg;
  auto apply = [&](const std::string& key) {
    auto it = last.find(key);
    if (it == last.end()) return;
    try {
      find_field(key)->set(cfg, it->second);
    } catch (const std::exception& e) {
      problems.push_back("key '" + key + "': " + e.what());
    }
  };
  apply("preset");
  apply("desk");
  if (cfg.desk) apply_desk_defaults(cfg);
  for (const auto& f : fields()) {
    if (f.key != "preset" && f.key != "desk") apply(f.key);
  }
  // Sub-seeds follow the master seed unless given explicitly.
  auto resolve = [&](const char* key, std::uint64_t& target, std::uint64_t tag) {
    if (!last.count(key)) target = derive_seed(cfg.seed, {tag});
  };
  resolve("data_seed", cfg.data_seed, 1);
  resolve("augment_seed", cfg.augment_seed, 2);
  resolve("init_seed", cfg.init_seed, 3);
  resolve("kmeans_seed", cfg.kmeans_seed, 4);
  resolve("synth_seed", cfg.synth.seed, 5);
  resolve("subsample_seed", cfg.eval.subsample_seed, 6);
  cfg.cld.kmeans_seed = cfg.kmeans_seed;
  // One of the pair given means the other keeps its default rather than "auto".
  if (last.count("norm_mean") && last.count("norm_std") &&
      (last["norm_mean"] == "auto") != (last["norm_std"] == "auto")) {
    problems.push_back("norm_mean and norm_std must both be 'auto' or both be given");
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    problems.insert(problems.end(), e.problems().begin(), e.problems().end());
  }
  if (!problems.empty()) throw ConfigError(problems);
  return cfg;
}

std::string config_to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace aerossl
