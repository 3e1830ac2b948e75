// aerossl command-line entry point: synth/tile -> pretrain -> probe/finetune -> report.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aerossl/checkpoint.hpp"
#include "aerossl/config.hpp"
#include "aerossl/eval.hpp"
#include "aerossl/report.hpp"
#include "aerossl/tiling.hpp"
#include "aerossl/trainer.hpp"

namespace fs = std::filesystem;
using namespace aerossl;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool desk = false;
};

// Settings given as command flags, applied after the config file and environment.
struct Overrides {
  ConfigEntries entries;
  template <typename T>
  void add(const std::string& key, const std::optional<T>& v) {
    if (!v) return;
    if constexpr (std::is_same_v<T, std::string>) {
      entries.emplace_back(key, *v);
    } else {
      std::ostringstream os;
      os.precision(17);
      os << *v;
      entries.emplace_back(key, os.str());
    }
  }
};

RunConfig resolve_config(const Globals& g, const ConfigEntries& base, const Overrides& ov) {
  ConfigEntries entries = base;
  if (!g.config_path.empty()) {
    const auto file = read_config_file(g.config_path);
    entries.insert(entries.end(), file.begin(), file.end());
  }
  const auto env = env_overrides();
  entries.insert(entries.end(), env.begin(), env.end());
  if (g.desk) entries.emplace_back("desk", "true");
  if (g.seed) entries.emplace_back("seed", std::to_string(*g.seed));
  entries.insert(entries.end(), ov.entries.begin(), ov.entries.end());
  return build_config(entries);
}

std::string require_out(const Globals& g) {
  if (g.out.empty()) throw std::invalid_argument("--out is required for this command");
  return g.out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string frames_dir_of(const RunConfig& cfg, const std::string& flag) {
  const std::string dir = !flag.empty() ? flag : cfg.frames_dir;
  if (dir.empty()) throw std::invalid_argument("no frame directory given (--frames-dir or frames_dir key)");
  return dir;
}

int cmd_synth(const Globals& g, std::optional<int> frames, std::optional<double> density,
              std::optional<double> prevalence) {
  Overrides ov;
  ov.add("synth_frames", frames);
  ov.add("blob_density", density);
  ov.add("prevalence", prevalence);
  if (g.seed) ov.entries.emplace_back("synth_seed", std::to_string(*g.seed));
  const RunConfig cfg = resolve_config(g, {}, ov);
  const std::string out = require_out(g);
  const auto generated = synth_generate(cfg.synth);
  save_frames(out, generated);
  std::size_t animals = 0;
  for (const auto& f : generated) animals += f.annotations.size();
  std::printf("frames: %zu\nanimals: %zu\nout: %s\n", generated.size(), animals, out.c_str());
  return 0;
}

int cmd_tile(const Globals& g, const std::string& frames_flag, std::optional<int> size, std::optional<int> per_frame,
             std::optional<bool> overlap, bool save_pngs) {
  Overrides ov;
  ov.add("tile_size", size);
  ov.add("tiles_per_frame", per_frame);
  if (overlap) ov.entries.emplace_back("overlap_on_animal_frames", *overlap ? "true" : "false");
  const RunConfig cfg = resolve_config(g, {}, ov);
  const std::string out = require_out(g);
  const auto frames = load_frames(frames_dir_of(cfg, frames_flag));
  PretrainSetOptions opt;
  opt.patch_size = cfg.tiling.tile_size;
  opt.patches_per_frame = cfg.tiling.tiles_per_frame;
  opt.overlap_on_animal_frames = cfg.tiling.overlap_on_animal_frames;
  opt.overlap_fraction = cfg.tiling.overlap_fraction;
  opt.seed = cfg.data_seed;
  const DatasetManifest m = build_pretrain_set(frames, opt);
  fs::create_directories(out);
  write_manifest_csv((fs::path(out) / "pretrain_manifest.csv").string(), m);
  if (save_pngs) save_patches((fs::path(out) / "patches").string(), m, frames);
  std::printf("frames: %zu\npatches: %zu\nmanifest: %s\n", frames.size(), m.records.size(),
              (fs::path(out) / "pretrain_manifest.csv").string().c_str());
  return 0;
}

int cmd_build_downstream(const Globals& g, const std::string& frames_flag, std::optional<double> ratio,
                         std::optional<int> fg_size, std::optional<int> bg_size) {
  Overrides ov;
  ov.add("bg_per_fg", ratio);
  ov.add("fg_size", fg_size);
  ov.add("bg_size", bg_size);
  const RunConfig cfg = resolve_config(g, {}, ov);
  const std::string out = require_out(g);
  const auto frames = load_frames(frames_dir_of(cfg, frames_flag));
  DownstreamSetOptions opt;
  opt.fg_size = cfg.tiling.fg_size;
  opt.bg_size = cfg.tiling.bg_size;
  opt.bg_per_fg = cfg.tiling.bg_per_fg;
  opt.split_seed = cfg.data_seed;
  opt.crop_seeds = {derive_seed(cfg.data_seed, {1}), derive_seed(cfg.data_seed, {2}), derive_seed(cfg.data_seed, {3})};
  const DatasetManifest m = build_downstream_set(frames, opt);
  fs::create_directories(out);
  const auto path = (fs::path(out) / "downstream_manifest.csv").string();
  write_manifest_csv(path, m);
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    std::printf("%s: %zu foreground, %zu background\n", to_string(s), m.select(s, PatchLabel::kForeground).size(),
                m.select(s, PatchLabel::kBackground).size());
  }
  const double fg = static_cast<double>(m.select(Split::kTrain, PatchLabel::kForeground).size());
  const double bg = static_cast<double>(m.select(Split::kTrain, PatchLabel::kBackground).size());
  std::printf("train background per foreground: %.3f\nskipped boxes: %zu\nmanifest: %s\n", fg > 0 ? bg / fg : 0.0,
              m.skipped.size(), path.c_str());
  return 0;
}

int cmd_pretrain(const Globals& g, const Overrides& ov, const std::string& resume, const std::string& downstream) {
  const RunConfig cfg = resolve_config(g, {}, ov);
  const std::string out = require_out(g);
  if (fs::exists(out) && !fs::is_empty(out)) {
    throw std::invalid_argument("run directory " + out + " already exists and is not empty");
  }
  if (cfg.pretrain_manifest.empty()) throw std::invalid_argument("pretrain_manifest is not set");
  const auto frames = load_frames(frames_dir_of(cfg, ""));
  const DatasetManifest m = read_manifest_csv(cfg.pretrain_manifest);
  const auto records = m.select(Split::kPretrain);
  if (records.empty()) throw std::invalid_argument("manifest " + cfg.pretrain_manifest + " has no pretrain split");
  const auto patches = materialize(records, frames);

  PretrainOptions opt;
  opt.out_dir = out;
  opt.resume_from = resume;
  std::optional<DownstreamData> knn;
  const std::string ds = !downstream.empty() ? downstream : cfg.downstream_manifest;
  if (cfg.knn_interval > 0 && !ds.empty()) {
    knn = load_downstream(read_manifest_csv(ds), frames, 1.0, 0);
    opt.knn_data = &*knn;
  }
  const PretrainResult r = pretrain(cfg, patches, opt);
  std::printf("preset: %s\nsteps: %ld\nfinal loss: %.6f\ncheckpoint: %s\n", to_string(cfg.strategy), r.steps_done,
              r.rows.empty() ? 0.0 : r.rows.back().loss, r.last_checkpoint.c_str());
  return 0;
}

struct EvalInputs {
  RunConfig cfg;
  std::optional<EncoderState<float>> state;
  InputNorm norm;
  DownstreamData data;
};

EvalInputs load_eval_inputs(const Globals& g, const std::string& checkpoint, bool random_init,
                            const std::string& downstream, const std::string& frames_flag, const Overrides& ov) {
  if (checkpoint.empty() && !random_init) throw std::invalid_argument("--checkpoint is required (or --random-init)");
  EvalInputs in;
  std::optional<Checkpoint> ck;
  ConfigEntries base;
  if (!checkpoint.empty()) {
    if (!fs::exists(checkpoint)) throw std::invalid_argument("checkpoint not found: " + checkpoint);
    ck = load_checkpoint(checkpoint);
    base = parse_config_text(ck->config_text);
  }
  in.cfg = resolve_config(g, base, ov);
  in.state.emplace(build_encoder(in.cfg.backbone, in.cfg.head, in.cfg.init_seed));
  const std::string ds = !downstream.empty() ? downstream : in.cfg.downstream_manifest;
  if (ds.empty()) throw std::invalid_argument("no downstream manifest given (--downstream or downstream_manifest key)");
  const auto frames = load_frames(frames_dir_of(in.cfg, frames_flag));
  in.data = load_downstream(read_manifest_csv(ds), frames, in.cfg.eval.label_fraction, in.cfg.eval.subsample_seed);
  if (ck) {
    load_parameters(in.state->query, ck->query);
    in.norm = ck->norm;
  } else if (in.cfg.norm) {
    in.norm = *in.cfg.norm;
  } else {
    in.norm = compute_input_norm(in.data.train.images);
  }
  return in;
}

std::string default_run_id(const std::string& checkpoint, bool random_init) {
  if (random_init || checkpoint.empty()) return "random_init";
  return fs::path(checkpoint).parent_path().filename().string() + "_" + fs::path(checkpoint).stem().string();
}

void write_eval_outputs(const std::string& out, const std::string& run_id, const EvalInputs& in,
                        const ProbeResult& r) {
  fs::create_directories(out);
  append_results_csv((fs::path(out) / "results.csv").string(), run_id, r);
  write_predictions_csv((fs::path(out) / ("preds_" + run_id + ".csv")).string(), in.data.val, r.predictions);
  write_text(fs::path(out) / ("config_" + run_id + "_" + r.mode + ".txt"), config_to_text(in.cfg));
  std::printf("run: %s\nmode: %s\nfraction: %g\ntop1: %.2f\nprecision_fg: %.2f%s\nrecall_fg: %.2f\n", run_id.c_str(),
              r.mode.c_str(), r.label_fraction, r.metrics.top1, r.metrics.precision_fg,
              r.metrics.precision_undefined ? " (no foreground predictions)" : "", r.metrics.recall_fg);
}

int cmd_probe(const Globals& g, const std::string& checkpoint, bool random_init, const std::string& downstream,
              const std::string& frames_flag, std::string run_id, const Overrides& ov) {
  const std::string out = require_out(g);
  EvalInputs in = load_eval_inputs(g, checkpoint, random_init, downstream, frames_flag, ov);
  const int crop = in.cfg.eval.eval_crop;
  Encoder<float>& enc = in.state->query;
  const Mat train = extract_features(enc, make_crops(in.data.train.images, crop, true, in.cfg.eval.subsample_seed), in.norm);
  const Mat val = extract_features(enc, make_crops(in.data.val.images, crop, false, 0), in.norm);
  ProbeConfig pc;
  pc.lr = in.cfg.eval.probe_lr;
  pc.epochs = in.cfg.eval.probe_epochs;
  pc.batch = in.cfg.eval.probe_batch;
  pc.momentum = in.cfg.eval.probe_momentum;
  pc.weight_decay = in.cfg.eval.probe_weight_decay;
  pc.feature_norm = in.cfg.eval.probe_feature_norm;
  pc.seed = in.cfg.eval.subsample_seed;
  const ProbeResult r = linear_probe(train, in.data.train.labels, val, in.data.val.labels, pc, in.cfg.eval.label_fraction);
  if (run_id.empty()) run_id = default_run_id(checkpoint, random_init);
  write_eval_outputs(out, run_id, in, r);
  return 0;
}

int cmd_finetune(const Globals& g, const std::string& checkpoint, bool random_init, const std::string& downstream,
                 const std::string& frames_flag, std::string run_id, const Overrides& ov) {
  const std::string out = require_out(g);
  EvalInputs in = load_eval_inputs(g, checkpoint, random_init, downstream, frames_flag, ov);
  FinetuneConfig fc;
  fc.lr = in.cfg.eval.finetune_lr;
  fc.epochs = in.cfg.eval.finetune_epochs;
  fc.batch = in.cfg.eval.finetune_batch;
  fc.weight_decay = in.cfg.eval.finetune_weight_decay;
  fc.crop = in.cfg.eval.eval_crop;
  fc.seed = in.cfg.eval.subsample_seed;
  const ProbeResult r = finetune_end_to_end(in.state->query, in.data.train, in.data.val, in.norm, fc,
                                            in.cfg.eval.label_fraction);
  if (run_id.empty()) run_id = default_run_id(checkpoint, random_init);
  write_eval_outputs(out, run_id, in, r);
  return 0;
}

int cmd_knn(const Globals& g, const std::string& checkpoint, bool random_init, const std::string& downstream,
            const std::string& frames_flag, const Overrides& ov) {
  EvalInputs in = load_eval_inputs(g, checkpoint, random_init, downstream, frames_flag, ov);
  const int crop = in.cfg.eval.eval_crop;
  const Mat train = unit_features(in.state->query, in.data.train, in.norm, crop);
  const Mat val = unit_features(in.state->query, in.data.val, in.norm, crop);
  const int k = std::min<int>(in.cfg.knn_k, static_cast<int>(train.rows()));
  const double acc = knn_monitor(train, in.data.train.labels, val, in.data.val.labels, k, in.cfg.knn_t);
  std::printf("knn k=%d t=%g accuracy: %.2f\n", k, in.cfg.knn_t, acc);
  return 0;
}

int cmd_report(const Globals& g, const std::vector<std::string>& runs, const std::vector<std::string>& results) {
  const std::string out = require_out(g);
  fs::create_directories(out);
  std::vector<std::pair<std::string, MetricsLog>> logs;
  for (const auto& dir : runs) {
    const fs::path p = fs::path(dir) / "metrics.csv";
    if (!fs::exists(p)) throw std::invalid_argument("no metrics.csv in " + dir);
    logs.emplace_back(fs::path(dir).filename().string(), read_metrics_csv(p.string()));
  }
  const auto loss = curves_from_logs(logs, "loss");
  write_text(fs::path(out) / "loss.svg", render_curves_svg(loss, "Pretraining loss", "loss"));
  std::printf("loss curves: %zu -> %s\n", loss.size(), (fs::path(out) / "loss.svg").string().c_str());
  const auto knn = curves_from_logs(logs, "knn_acc");
  if (!knn.empty()) {
    write_text(fs::path(out) / "knn.svg", render_curves_svg(knn, "kNN monitor accuracy", "kNN top-1 (%)"));
    std::printf("knn curves: %zu -> %s\n", knn.size(), (fs::path(out) / "knn.svg").string().c_str());
  }
  std::vector<ResultRow> rows;
  for (const auto& r : results) {
    const auto part = read_results_csv(r);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (!rows.empty()) {
    write_results_table((fs::path(out) / "results_table.csv").string(), rows);
    std::printf("results rows: %zu -> %s\n", rows.size(), (fs::path(out) / "results_table.csv").string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aerossl: contrastive pretraining and evaluation on aerial patches"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Flat key = value configuration file");
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--desk", g.desk, "Desk-scale defaults (small patches and backbone, short schedules)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic aerial frames with animal annotations");
  std::optional<int> synth_frames;
  std::optional<double> synth_density, synth_prevalence;
  synth->add_option("--frames", synth_frames, "Number of frames");
  synth->add_option("--blob-density", synth_density, "Expected animals per 512x512 area");
  synth->add_option("--prevalence", synth_prevalence, "Probability that a frame carries animals");

  // tile
  auto* tile = app.add_subcommand("tile", "Cut unlabeled pretraining patches from frames");
  std::string tile_frames;
  std::optional<int> tile_size, tile_per_frame;
  std::optional<bool> tile_overlap;
  bool tile_save = false;
  tile->add_option("--frames-dir", tile_frames, "Frame directory");
  tile->add_option("--size", tile_size, "Patch side in pixels");
  tile->add_option("--per-frame", tile_per_frame, "Random patches per frame");
  tile->add_option("--overlap", tile_overlap, "Overlapping grid on frames with animals (true/false)");
  tile->add_flag("--save-patches", tile_save, "Also write patch PNGs");

  // build-downstream
  auto* ds = app.add_subcommand("build-downstream", "Build the labeled long-tail downstream set");
  std::string ds_frames;
  std::optional<double> ds_ratio;
  std::optional<int> ds_fg, ds_bg;
  ds->add_option("--frames-dir", ds_frames, "Frame directory");
  ds->add_option("--ratio", ds_ratio, "Background patches per foreground patch in train");
  ds->add_option("--fg-size", ds_fg, "Foreground patch side");
  ds->add_option("--bg-size", ds_bg, "Background patch side");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Self-supervised pretraining run");
  std::optional<std::string> pre_preset;
  std::optional<int> pre_epochs;
  std::optional<double> pre_gamma, pre_mix_p, pre_beta;
  std::string pre_resume, pre_downstream;
  pre->add_option("--preset", pre_preset, "moco_v2, moco_cld, moco_geo, geocld or mixco");
  pre->add_option("--epochs", pre_epochs, "Training epochs");
  pre->add_option("--gamma", pre_gamma, "Color-branch weight of the unmixed loss");
  pre->add_option("--mix-p", pre_mix_p, "Probability of the mixture branch");
  pre->add_option("--beta", pre_beta, "Beta distribution parameter for the mixing weight");
  pre->add_option("--resume", pre_resume, "Continue from a checkpoint");
  pre->add_option("--downstream", pre_downstream, "Labeled manifest for the kNN monitor");

  // probe / finetune / knn share their inputs
  struct EvalFlags {
    std::string checkpoint, downstream, frames, run_id;
    bool random_init = false;
    std::optional<double> fraction;
  };
  EvalFlags probe_f, ft_f, knn_f;
  auto add_eval = [](CLI::App* sub, EvalFlags& f) {
    sub->add_option("--checkpoint", f.checkpoint, "Pretraining checkpoint");
    sub->add_flag("--random-init", f.random_init, "Use a randomly initialized encoder");
    sub->add_option("--downstream", f.downstream, "Labeled downstream manifest");
    sub->add_option("--frames-dir", f.frames, "Frame directory");
    sub->add_option("--fraction", f.fraction, "Fraction of train labels to use");
    sub->add_option("--run-id", f.run_id, "Row identifier in results.csv");
  };
  auto* probe = app.add_subcommand("probe", "Linear probe on frozen pooled features");
  add_eval(probe, probe_f);
  auto* ft = app.add_subcommand("finetune", "End-to-end fine-tuning with a linear classifier");
  add_eval(ft, ft_f);
  auto* knn = app.add_subcommand("knn", "Weighted kNN accuracy of pooled features");
  add_eval(knn, knn_f);
  std::optional<int> knn_k;
  std::optional<double> knn_t;
  knn->add_option("--k", knn_k, "Neighbors");
  knn->add_option("--t", knn_t, "Vote temperature");

  // report
  auto* rep = app.add_subcommand("report", "Render loss/kNN curves and a results table");
  std::vector<std::string> rep_runs, rep_results;
  rep->add_option("--runs", rep_runs, "Run directories containing metrics.csv")->required();
  rep->add_option("--results", rep_results, "results.csv files to tabulate");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(g, synth_frames, synth_density, synth_prevalence);
    if (*tile) return cmd_tile(g, tile_frames, tile_size, tile_per_frame, tile_overlap, tile_save);
    if (*ds) return cmd_build_downstream(g, ds_frames, ds_ratio, ds_fg, ds_bg);
    if (*pre) {
      Overrides ov;
      ov.add("preset", pre_preset);
      ov.add("epochs", pre_epochs);
      ov.add("gamma", pre_gamma);
      ov.add("mix_p", pre_mix_p);
      ov.add("beta", pre_beta);
      return cmd_pretrain(g, ov, pre_resume, pre_downstream);
    }
    if (*probe || *ft || *knn) {
      EvalFlags& f = *probe ? probe_f : (*ft ? ft_f : knn_f);
      Overrides ov;
      ov.add("label_fraction", f.fraction);
      if (*knn) {
        ov.add("knn_k", knn_k);
        ov.add("knn_t", knn_t);
        return cmd_knn(g, f.checkpoint, f.random_init, f.downstream, f.frames, ov);
      }
      if (*probe) return cmd_probe(g, f.checkpoint, f.random_init, f.downstream, f.frames, f.run_id, ov);
      return cmd_finetune(g, f.checkpoint, f.random_init, f.downstream, f.frames, f.run_id, ov);
    }
    if (*rep) return cmd_report(g, rep_runs, rep_results);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: invalid configuration\n");
    for (const auto& p : e.problems()) std::fprintf(stderr, "  - %s\n", p.c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
