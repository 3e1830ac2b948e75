#include "aerossl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "aerossl/optim.hpp"
#include "aerossl/rng.hpp"

namespace aerossl {

Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("compute_metrics: length mismatch");
  if (labels.empty()) throw std::invalid_argument("compute_metrics: no samples");
  Metrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred_fg = predictions[i] == kForegroundClass;
    const bool true_fg = labels[i] == kForegroundClass;
    if (pred_fg && true_fg) ++m.tp;
    else if (pred_fg) ++m.fp;
    else if (true_fg) ++m.fn;
    else ++m.tn;
  }
  m.top1 = 100.0 * static_cast<double>(m.tp + m.tn) / static_cast<double>(labels.size());
  if (m.tp + m.fp == 0) {
    m.precision_undefined = true;
    m.precision_fg = 0;
  } else {
    m.precision_fg = 100.0 * static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  }
  m.recall_fg = m.tp + m.fn == 0 ? 0.0 : 100.0 * static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  return m;
}

namespace {

LabeledSet labeled_split(const DatasetManifest& manifest, Split split, const std::vector<SourceFrame>& frames) {
  LabeledSet s;
  const auto records = manifest.select(split);
  s.images = materialize(records, frames);
  for (const auto* r : records) {
    if (r->label == PatchLabel::kUnlabeled) throw std::invalid_argument("split contains unlabeled patch " + r->patch_id);
    s.ids.push_back(r->patch_id);
    s.labels.push_back(r->label == PatchLabel::kForeground ? kForegroundClass : kBackgroundClass);
  }
  return s;
}

}  // namespace

DownstreamData load_downstream(const DatasetManifest& manifest, const std::vector<SourceFrame>& frames,
                               double label_fraction, std::uint64_t subsample_seed) {
  if (manifest.is_pretrain()) throw std::invalid_argument("downstream evaluation needs a labeled manifest");
  const DatasetManifest sub =
      label_fraction < 1.0 ? subsample_labels(manifest, label_fraction, subsample_seed) : manifest;
  DownstreamData d;
  d.train = labeled_split(sub, Split::kTrain, frames);
  d.val = labeled_split(sub, Split::kVal, frames);
  d.test = labeled_split(sub, Split::kTest, frames);
  return d;
}

std::vector<ImageF> make_crops(const std::vector<Image8>& images, int side, bool random, std::uint64_t seed) {
  std::vector<ImageF> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image8& img = images[i];
    if (img.width() < side || img.height() < side) {
      throw std::invalid_argument("patch smaller than the evaluation crop (" + std::to_string(img.width()) + "x" +
                                  std::to_string(img.height()) + " < " + std::to_string(side) + ")");
    }
    int x = (img.width() - side) / 2, y = (img.height() - side) / 2;
    if (random) {
      Rng rng = make_rng(seed, {i});
      x = uniform_int(rng, 0, img.width() - side);
      y = uniform_int(rng, 0, img.height() - side);
    }
    out.push_back(to_float(crop(img, x, y, side, side)));
  }
  return out;
}

Mat extract_features(Encoder<float>& encoder, const std::vector<ImageF>& crops, const InputNorm& norm, int batch) {
  Mat out(static_cast<Eigen::Index>(crops.size()), encoder.feature_dim());
  for (std::size_t begin = 0; begin < crops.size(); begin += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(crops.size(), begin + static_cast<std::size_t>(batch));
    std::vector<const ImageF*> ptrs;
    for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&crops[i]);
    const nn::Tensor<float> f = encoder.features(images_to_tensor<float>(ptrs, norm));
    for (std::size_t i = begin; i < end; ++i) {
      const float* s = f.sample(static_cast<int>(i - begin));
      for (int j = 0; j < encoder.feature_dim(); ++j) out(static_cast<Eigen::Index>(i), j) = s[j];
    }
  }
  encoder.clear_cache();
  return out;
}

namespace {

void normalize_features(const std::string& mode, Mat& train, Mat& val) {
  if (mode == "none") return;
  if (mode == "l2") {
    for (Mat* m : {&train, &val}) {
      for (Eigen::Index i = 0; i < m->rows(); ++i) {
        const double n = m->row(i).norm();
        if (n > 0) m->row(i) /= n;
      }
    }
    return;
  }
  if (mode == "standardize") {
    const Eigen::RowVectorXd mean = train.colwise().mean();
    Eigen::RowVectorXd sd = ((train.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
    for (Eigen::Index j = 0; j < sd.size(); ++j) sd(j) = sd(j) > 1e-12 ? sd(j) : 1.0;
    for (Mat* m : {&train, &val}) {
      *m = ((m->rowwise() - mean).array().rowwise() / sd.array()).matrix();
    }
    return;
  }
  throw std::invalid_argument("unknown feature normalization '" + mode + "'");
}

void check_two_classes(const std::vector<int>& labels) {
  bool fg = false, bg = false;
  for (int l : labels) {
    fg |= l == kForegroundClass;
    bg |= l == kBackgroundClass;
  }
  if (!fg || !bg) throw std::invalid_argument("training labels contain a single class");
}

int argmax2(double l0, double l1) { return l1 > l0 ? kForegroundClass : kBackgroundClass; }

}  // namespace

ProbeResult linear_probe(const Mat& train_in, const std::vector<int>& train_labels, const Mat& val_in,
                         const std::vector<int>& val_labels, const ProbeConfig& config, double label_fraction) {
  if (train_in.rows() != static_cast<Eigen::Index>(train_labels.size()) ||
      val_in.rows() != static_cast<Eigen::Index>(val_labels.size())) {
    throw std::invalid_argument("linear_probe: feature/label count mismatch");
  }
  if (train_in.cols() != val_in.cols()) throw std::invalid_argument("linear_probe: feature dims differ");
  check_two_classes(train_labels);
  if (config.batch < 1 || config.epochs < 0) throw std::invalid_argument("linear_probe: bad schedule");
  Mat train = train_in, val = val_in;
  normalize_features(config.feature_norm, train, val);

  const Eigen::Index n = train.rows(), d = train.cols();
  Rng rng = make_rng(config.seed, {0});
  std::normal_distribution<double> init(0.0, 0.01);
  Mat w(2, d);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = init(rng);
  Vec b = Vec::Zero(2);
  Mat vw = Mat::Zero(2, d);
  Vec vb = Vec::Zero(2);
  bool fresh = true;

  const long steps_per_epoch = static_cast<long>((n + config.batch - 1) / config.batch);
  const long total = steps_per_epoch * config.epochs;
  long step = 0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng shuffle = make_rng(config.seed, {1, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle);
    for (Eigen::Index begin = 0; begin < n; begin += config.batch, ++step) {
      const Eigen::Index bs = std::min<Eigen::Index>(config.batch, n - begin);
      Mat xb(bs, d);
      std::vector<int> yb(static_cast<std::size_t>(bs));
      for (Eigen::Index i = 0; i < bs; ++i) {
        xb.row(i) = train.row(order[static_cast<std::size_t>(begin + i)]);
        yb[static_cast<std::size_t>(i)] = train_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(begin + i)])];
      }
      Mat logits = xb * w.transpose();
      logits.rowwise() += b.transpose();
      Mat g(bs, 2);
      for (Eigen::Index i = 0; i < bs; ++i) {
        const double mx = logits.row(i).maxCoeff();
        const double e0 = std::exp(logits(i, 0) - mx), e1 = std::exp(logits(i, 1) - mx);
        g(i, 0) = e0 / (e0 + e1);
        g(i, 1) = e1 / (e0 + e1);
        g(i, yb[static_cast<std::size_t>(i)]) -= 1.0;
      }
      g /= static_cast<double>(bs);
      const Mat dw = g.transpose() * xb + config.weight_decay * w;
      const Vec db = g.colwise().sum().transpose();
      if (fresh) {
        vw = dw;
        vb = db;
        fresh = false;
      } else {
        vw = config.momentum * vw + dw;
        vb = config.momentum * vb + db;
      }
      const double lr = cosine_lr(config.lr, step, total);
      w -= lr * vw;
      b -= lr * vb;
    }
  }

  ProbeResult r;
  r.mode = "frozen";
  r.label_fraction = label_fraction;
  Mat logits = val * w.transpose();
  logits.rowwise() += b.transpose();
  for (Eigen::Index i = 0; i < val.rows(); ++i) r.predictions.push_back(argmax2(logits(i, 0), logits(i, 1)));
  r.metrics = compute_metrics(r.predictions, val_labels);
  return r;
}

ProbeResult finetune_end_to_end(const Encoder<float>& source, const LabeledSet& train, const LabeledSet& val,
                                const InputNorm& norm, const FinetuneConfig& config, double label_fraction) {
  check_two_classes(train.labels);
  if (config.batch < 1 || config.epochs < 0) throw std::invalid_argument("finetune: bad schedule");
  Encoder<float> enc(source);
  nn::Linear<float> head(enc.feature_dim(), 2, "classifier");
  Rng init = make_rng(config.seed, {0});
  head.reset_parameters(init);
  auto params = enc.backbone_parameters();
  head.collect_parameters(params);
  Sgd opt(config.momentum, config.weight_decay);

  const std::size_t n = train.images.size();
  const long steps_per_epoch = static_cast<long>((n + static_cast<std::size_t>(config.batch) - 1) / config.batch);
  const long total = steps_per_epoch * config.epochs;
  long step = 0;
  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = make_rng(config.seed, {1, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle);
    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(config.batch), ++step) {
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(config.batch));
      std::vector<Image8> imgs;
      std::vector<int> labels;
      for (std::size_t i = begin; i < end; ++i) {
        imgs.push_back(train.images[order[i]]);
        labels.push_back(train.labels[order[i]]);
      }
      const auto crops = make_crops(imgs, config.crop, true, derive_seed(config.seed, {2, static_cast<std::uint64_t>(step)}));
      std::vector<const ImageF*> ptrs;
      for (const auto& c : crops) ptrs.push_back(&c);
      const nn::Tensor<float> logits = head.forward(enc.features(images_to_tensor<float>(ptrs, norm)));
      nn::Tensor<float> grad(logits.n, 2, 1, 1);
      for (int i = 0; i < logits.n; ++i) {
        const double l0 = logits.sample(i)[0], l1 = logits.sample(i)[1];
        const double mx = std::max(l0, l1);
        const double e0 = std::exp(l0 - mx), e1 = std::exp(l1 - mx);
        double p[2] = {e0 / (e0 + e1), e1 / (e0 + e1)};
        p[labels[static_cast<std::size_t>(i)]] -= 1.0;
        grad.sample(i)[0] = static_cast<float>(p[0] / logits.n);
        grad.sample(i)[1] = static_cast<float>(p[1] / logits.n);
      }
      enc.backward_features(head.backward(grad));
      opt.step(params, cosine_lr(config.lr, step, total));
    }
  }
  enc.clear_cache();

  ProbeResult r;
  r.mode = "end_to_end";
  r.label_fraction = label_fraction;
  const auto crops = make_crops(val.images, config.crop, false, 0);
  const Mat f = extract_features(enc, crops, norm);
  const auto& wv = head.weight().value;
  const auto& bv = head.bias().value;
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    double l[2];
    for (int c = 0; c < 2; ++c) {
      double acc = bv[static_cast<std::size_t>(c)];
      for (Eigen::Index j = 0; j < f.cols(); ++j) acc += static_cast<double>(wv[static_cast<std::size_t>(c * f.cols() + j)]) * f(i, j);
      l[c] = acc;
    }
    r.predictions.push_back(argmax2(l[0], l[1]));
  }
  r.metrics = compute_metrics(r.predictions, val.labels);
  return r;
}

void append_results_csv(const std::string& path, const std::string& run_id, const ProbeResult& result) {
  const bool exists = std::filesystem::exists(path) && std::filesystem::file_size(path) > 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (!exists) out << "run_id,mode,fraction,top1,prec_fg,rec_fg\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%s,%g,%.4f,%.4f,%.4f\n", run_id.c_str(), result.mode.c_str(),
                result.label_fraction, result.metrics.top1, result.metrics.precision_fg, result.metrics.recall_fg);
  out << buf;
}

void write_predictions_csv(const std::string& path, const LabeledSet& set, const std::vector<int>& predictions) {
  if (predictions.size() != set.labels.size()) throw std::invalid_argument("prediction count mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "patch_id,label,prediction\n";
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    out << set.ids[i] << ',' << (set.labels[i] == kForegroundClass ? "foreground" : "background") << ','
        << (predictions[i] == kForegroundClass ? "foreground" : "background") << '\n';
  }
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<ResultRow> rows;
  std::string line;
  std::getline(in, line);
  if (line.rfind("run_id,mode,fraction", 0) != 0) throw std::runtime_error(path + " is not a results table");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw std::runtime_error("malformed results row in " + path + ": " + line);
    rows.push_back({cells[0], cells[1], std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4]),
                    std::stod(cells[5])});
  }
  return rows;
}

}  // namespace aerossl
