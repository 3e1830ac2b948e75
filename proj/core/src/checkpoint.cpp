#include "aerossl/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace aerossl {

namespace {

constexpr char kMagic[8] = {'A', 'E', 'R', 'O', 'S', 'S', 'L', '\0'};

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write checkpoint " + path);
  }
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  template <typename T>
  void vec(const std::vector<T>& v) {
    pod<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  }
  void raw(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void finish(const std::string& path) {
    out_.flush();
    if (!out_) throw std::runtime_error("failed writing checkpoint " + path);
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw std::runtime_error("cannot open checkpoint " + path);
  }
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string str() {
    const auto n = bounded(pod<std::uint64_t>());
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  template <typename T>
  std::vector<T> vec() {
    const auto n = bounded(pod<std::uint64_t>() * sizeof(T)) / sizeof(T);
    std::vector<T> v(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    check();
    return v;
  }
  void raw(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    check();
  }

 private:
  void check() {
    if (!in_) throw std::runtime_error("truncated checkpoint " + path_);
  }
  static std::uint64_t bounded(std::uint64_t n) {
    if (n > (std::uint64_t{1} << 34)) throw std::runtime_error("corrupt checkpoint (size field too large)");
    return n;
  }
  std::ifstream in_;
  std::string path_;
};

std::vector<std::pair<std::string, std::vector<float>>> snapshot(Encoder<float>& enc) {
  std::vector<std::pair<std::string, std::vector<float>>> out;
  for (auto* p : enc.parameters()) out.emplace_back(p->name, p->value);
  return out;
}

void write_params(Writer& w, const std::vector<std::pair<std::string, std::vector<float>>>& params) {
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, values] : params) {
    w.str(name);
    w.vec(values);
  }
}

std::vector<std::pair<std::string, std::vector<float>>> read_params(Reader& r) {
  const auto n = r.pod<std::uint32_t>();
  std::vector<std::pair<std::string, std::vector<float>>> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    out.emplace_back(std::move(name), r.vec<float>());
  }
  return out;
}

}  // namespace

Checkpoint make_checkpoint(const std::string& config_text, std::int64_t step, std::int64_t epoch,
                           const InputNorm& norm, EncoderState<float>& state, const Sgd& optimizer,
                           const FeatureQueue& queue) {
  Checkpoint c;
  c.config_text = config_text;
  c.step = step;
  c.epoch = epoch;
  c.norm = norm;
  c.query = snapshot(state.query);
  c.key = snapshot(state.key);
  c.optimizer = optimizer.buffers();
  c.queue_capacity = queue.capacity();
  c.queue_dim = queue.dim();
  c.queue_fill = queue.size();
  c.queue_write = queue.write_ptr();
  const Mat& s = queue.storage();
  c.queue.resize(static_cast<std::size_t>(s.size()));
  // Row-major so the file layout does not depend on Eigen's storage order.
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) c.queue[static_cast<std::size_t>(i * s.cols() + j)] = s(i, j);
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  Writer w(path);
  w.raw(kMagic, sizeof kMagic);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.str(c.config_text);
  w.pod<std::int64_t>(c.step);
  w.pod<std::int64_t>(c.epoch);
  for (double v : c.norm.mean) w.pod(v);
  for (double v : c.norm.std) w.pod(v);
  write_params(w, c.query);
  write_params(w, c.key);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.optimizer.size()));
  for (const auto& b : c.optimizer) w.vec(b);
  w.pod<std::int32_t>(c.queue_capacity);
  w.pod<std::int32_t>(c.queue_dim);
  w.pod<std::int32_t>(c.queue_fill);
  w.pod<std::int32_t>(c.queue_write);
  w.vec(c.queue);
  w.finish(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw std::runtime_error(path + " is not a checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  }
  Checkpoint c;
  c.config_text = r.str();
  c.step = r.pod<std::int64_t>();
  c.epoch = r.pod<std::int64_t>();
  for (double& v : c.norm.mean) v = r.pod<double>();
  for (double& v : c.norm.std) v = r.pod<double>();
  c.query = read_params(r);
  c.key = read_params(r);
  const auto nbuf = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < nbuf; ++i) c.optimizer.push_back(r.vec<float>());
  c.queue_capacity = r.pod<std::int32_t>();
  c.queue_dim = r.pod<std::int32_t>();
  c.queue_fill = r.pod<std::int32_t>();
  c.queue_write = r.pod<std::int32_t>();
  c.queue = r.vec<double>();
  if (c.queue.size() != static_cast<std::size_t>(c.queue_capacity) * static_cast<std::size_t>(c.queue_dim)) {
    throw std::runtime_error("corrupt checkpoint queue in " + path);
  }
  return c;
}

void load_parameters(Encoder<float>& encoder,
                     const std::vector<std::pair<std::string, std::vector<float>>>& values) {
  auto params = encoder.parameters();
  if (params.size() != values.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(values.size()) + " parameters, encoder has " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->name != values[i].first || params[i]->value.size() != values[i].second.size()) {
      throw std::runtime_error("checkpoint parameter '" + values[i].first + "' does not match encoder parameter '" +
                               params[i]->name + "'");
    }
    params[i]->value = values[i].second;
  }
}

void restore_queue(const Checkpoint& c, FeatureQueue& queue) {
  if (c.queue_capacity != queue.capacity() || c.queue_dim != queue.dim()) {
    throw std::runtime_error("checkpoint queue shape does not match the configuration");
  }
  Mat s(c.queue_capacity, c.queue_dim);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) s(i, j) = c.queue[static_cast<std::size_t>(i * s.cols() + j)];
  }
  queue.restore(std::move(s), c.queue_fill, c.queue_write);
}

}  // namespace aerossl
