#include "aerossl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "aerossl/mixgeo.hpp"

namespace aerossl {

namespace fs = std::filesystem;

std::string metrics_header(const LossWiring& wiring) {
  std::string h = "step,epoch,lr,loss";
  if (wiring.group) h += ",loss_inst,loss_group,clusters_occupied,inertia";
  h += ",knn_acc,wall_time";
  return h;
}

std::string format_metric_row(const MetricRow& r, const LossWiring& wiring) {
  char buf[512];
  int n = std::snprintf(buf, sizeof buf, "%ld,%d,%.17g,%.17g", r.step, r.epoch, r.lr, r.loss);
  if (wiring.group) {
    n += std::snprintf(buf + n, sizeof buf - static_cast<std::size_t>(n), ",%.17g,%.17g,%d,%.17g", r.loss_inst,
                       r.loss_group, r.clusters_occupied, r.inertia);
  }
  if (r.knn_acc) {
    n += std::snprintf(buf + n, sizeof buf - static_cast<std::size_t>(n), ",%.6f", *r.knn_acc);
  } else {
    n += std::snprintf(buf + n, sizeof buf - static_cast<std::size_t>(n), ",");
  }
  std::snprintf(buf + n, sizeof buf - static_cast<std::size_t>(n), ",%.3f", r.wall_time);
  return buf;
}

std::vector<int> knn_predict(const Mat& train, const std::vector<int>& train_labels, const Mat& eval, int k,
                             double t) {
  if (train.rows() != static_cast<Eigen::Index>(train_labels.size())) {
    throw std::invalid_argument("knn: feature/label count mismatch");
  }
  if (k < 1 || k > train.rows()) throw std::invalid_argument("knn: k must be in [1, train size]");
  if (!(t > 0)) throw std::invalid_argument("knn: temperature must be positive");
  if (train.cols() != eval.cols()) throw std::invalid_argument("knn: feature dims differ");
  const Mat sim = eval * train.transpose();
  std::vector<int> preds;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(train.rows()));
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    // Highest similarity first; lower index wins ties.
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](Eigen::Index a, Eigen::Index b) {
      return sim(i, a) > sim(i, b) || (sim(i, a) == sim(i, b) && a < b);
    });
    std::map<int, double> votes;
    for (int j = 0; j < k; ++j) {
      const Eigen::Index n = idx[static_cast<std::size_t>(j)];
      votes[train_labels[static_cast<std::size_t>(n)]] += std::exp(sim(i, n) / t);
    }
    int best = votes.begin()->first;
    double best_w = -1;
    for (const auto& [label, w] : votes) {
      if (w > best_w) {
        best_w = w;
        best = label;
      }
    }
    preds.push_back(best);
  }
  return preds;
}

double knn_monitor(const Mat& train, const std::vector<int>& train_labels, const Mat& eval,
                   const std::vector<int>& eval_labels, int k, double t) {
  if (eval.rows() != static_cast<Eigen::Index>(eval_labels.size())) {
    throw std::invalid_argument("knn: eval feature/label count mismatch");
  }
  if (eval.rows() == 0) throw std::invalid_argument("knn: empty eval set");
  const auto preds = knn_predict(train, train_labels, eval, k, t);
  long correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == eval_labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(preds.size());
}

Mat unit_features(Encoder<float>& encoder, const LabeledSet& set, const InputNorm& norm, int crop) {
  Mat f = extract_features(encoder, make_crops(set.images, crop, false, 0), norm);
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    const double n = f.row(i).norm();
    if (n > 0) f.row(i) /= n;
  }
  return f;
}

namespace {

// Tags for keyed random streams.
constexpr std::uint64_t kMixStream = 0x6d6978;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

PretrainResult pretrain(const RunConfig& cfg, const std::vector<Image8>& patches, const PretrainOptions& options) {
  cfg.validate();
  if (patches.empty()) throw std::invalid_argument("pretrain split is empty");
  for (const auto& p : patches) cfg.aug.validate(std::min(p.width(), p.height()));

  const LossWiring wiring = options.wiring_override.value_or(wiring_for(cfg.strategy));
  const ViewStrategy vs = view_strategy(cfg.strategy);
  const std::string config_text = config_to_text(cfg);

  PretrainResult result;
  result.norm = cfg.norm ? *cfg.norm : compute_input_norm(patches);
  result.state.emplace(build_encoder(cfg.backbone, cfg.head, cfg.init_seed));
  EncoderState<float>& state = *result.state;
  FeatureQueue queue(cfg.queue_size, cfg.head.proj_dim);
  Sgd opt(cfg.sgd_momentum, cfg.weight_decay);

  const long n = static_cast<long>(patches.size());
  const long batch = std::min<long>(cfg.batch_size, n);
  const long steps_per_epoch = n / batch;
  const long total = steps_per_epoch * cfg.epochs;
  result.total_steps = total;
  long start = 0;

  if (!options.resume_from.empty()) {
    const Checkpoint ck = load_checkpoint(options.resume_from);
    if (ck.config_text != config_text) {
      throw std::runtime_error("checkpoint " + options.resume_from + " was written with a different configuration");
    }
    load_parameters(state.query, ck.query);
    load_parameters(state.key, ck.key);
    opt.set_buffers(ck.optimizer);
    restore_queue(ck, queue);
    result.norm = ck.norm;
    start = ck.step;
  }

  const bool write = !options.out_dir.empty();
  std::ofstream metrics;
  const fs::path out_dir(options.out_dir);
  if (write) {
    fs::create_directories(out_dir);
    std::string echo = config_text;
    if (!cfg.norm) {
      // Record the statistics actually used so the echo reproduces the run.
      char buf[256];
      std::snprintf(buf, sizeof buf, "# measured input normalization: mean=%.17g,%.17g,%.17g std=%.17g,%.17g,%.17g\n",
                    result.norm.mean[0], result.norm.mean[1], result.norm.mean[2], result.norm.std[0],
                    result.norm.std[1], result.norm.std[2]);
      echo += buf;
    }
    write_text(out_dir / "config.txt", echo);
    metrics.open(out_dir / "metrics.csv");
    if (!metrics) throw std::runtime_error("cannot write metrics.csv in " + options.out_dir);
    metrics << metrics_header(wiring) << '\n';
  }

  auto save = [&](long steps_done) {
    if (!write) return;
    const fs::path p = out_dir / ("ckpt_" + std::to_string(steps_done) + ".bin");
    const std::int64_t epoch = steps_per_epoch > 0 ? steps_done / steps_per_epoch : 0;
    save_checkpoint(p.string(), make_checkpoint(config_text, steps_done, epoch, result.norm, state, opt, queue));
    result.last_checkpoint = p.string();
  };

  StepOptions so;
  so.tau_q = cfg.tau_q;
  so.momentum = cfg.momentum;
  so.norm = result.norm;
  const double lr0 = cfg.effective_lr();
  const auto t_begin = std::chrono::steady_clock::now();
  const long stop = options.stop_after_step >= 0 ? std::min(options.stop_after_step, total) : total;

  std::vector<long> order(static_cast<std::size_t>(n));
  long t = start;
  while (t < stop) {
    const int epoch = static_cast<int>(t / steps_per_epoch);
    std::iota(order.begin(), order.end(), 0L);
    Rng shuffle = make_rng(cfg.data_seed, {static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle);

    for (long s = t % steps_per_epoch; s < steps_per_epoch && t < stop; ++s, ++t) {
      std::vector<ViewBundle> bundles;
      bundles.reserve(static_cast<std::size_t>(batch));
      for (long i = 0; i < batch; ++i) {
        Rng rng = make_rng(cfg.augment_seed, {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(i)});
        bundles.push_back(make_views(patches[static_cast<std::size_t>(order[static_cast<std::size_t>(s * batch + i)])],
                                     vs, cfg.aug, rng));
      }
      so.lr = cosine_lr(lr0, t, total);

      StepResult r;
      try {
        if (wiring.mixture) {
          Rng rng = make_rng(derive_seed(cfg.augment_seed, {kMixStream}), {static_cast<std::uint64_t>(t)});
          r = mixco_step<float>(bundles, state, queue, opt, cfg.mix, rng, so);
        } else {
          std::vector<const ImageF*> v1, v2, keys;
          for (const auto& b : bundles) {
            keys.push_back(&b.key->image);
            if (b.view1) v1.push_back(&b.view1->image);
            if (b.view2) v2.push_back(&b.view2->image);
          }
          LossPlan plan;
          std::vector<std::vector<const ImageF*>> q;
          if (wiring.two_views) {
            if (v1.size() != keys.size() || v2.size() != keys.size()) {
              throw std::invalid_argument("two-view wiring needs a strategy that produces two query views");
            }
            q = {v1, v2};
            plan.view_weights = {0.5, 0.5};
            plan.group = wiring.group;
            plan.cld = cfg.cld;
            plan.cld.kmeans_seed = derive_seed(cfg.kmeans_seed, {static_cast<std::uint64_t>(t)});
          } else {
            q = {v1.size() == keys.size() ? v1 : v2};
          }
          r = contrastive_step<float>(q, keys, plan, state, queue, opt, so);
        }
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("training aborted at step " + std::to_string(t) + " (epoch " +
                                 std::to_string(epoch) + "): " + e.what());
      }

      MetricRow row;
      row.step = t;
      row.epoch = epoch;
      row.lr = so.lr;
      row.loss = r.loss;
      row.loss_inst = r.loss_inst;
      row.loss_group = r.loss_group;
      if (r.clusters.size() == 2) {
        row.clusters_occupied = r.clusters[0].occupied();
        row.inertia = r.clusters[0].inertia;
      }
      if (!cfg.deterministic) {
        row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
      }
      const bool epoch_end = s + 1 == steps_per_epoch;
      if (epoch_end && cfg.knn_interval > 0 && (epoch + 1) % cfg.knn_interval == 0 && options.knn_data) {
        const auto& kd = *options.knn_data;
        const int k = std::min<int>(cfg.knn_k, static_cast<int>(kd.train.images.size()));
        const Mat ft = unit_features(state.query, kd.train, result.norm, cfg.eval.eval_crop);
        const Mat fv = unit_features(state.query, kd.val, result.norm, cfg.eval.eval_crop);
        row.knn_acc = knn_monitor(ft, kd.train.labels, fv, kd.val.labels, k, cfg.knn_t);
      }
      result.rows.push_back(row);
      if (write) metrics << format_metric_row(row, wiring) << '\n';

      const long done = t + 1;
      if (write && epoch_end && cfg.checkpoint_interval > 0 && (epoch + 1) % cfg.checkpoint_interval == 0 &&
          done != total) {
        save(done);
      }
    }
  }
  result.steps_done = t;
  if (write) {
    metrics.flush();
    save(t);
  }
  return result;
}

}  // namespace aerossl
