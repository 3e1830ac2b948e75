#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aerossl/contrastive.hpp"

namespace aerossl {

/// Binary layout (little-endian host order):
///   8 bytes  magic "AEROSSL\0"
///   u32      format version
///   string   config echo (u64 length + bytes)
///   i64      step, i64 epoch
///   f64 x 6  input normalization mean[3], std[3]
///   params   query encoder, then key encoder: u32 count, then per parameter
///            string name, u64 size, f32 values
///   optim    u32 count, per buffer u64 size + f32 values
///   queue    i32 capacity, dim, fill, write pointer; f64 capacity*dim values
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  InputNorm norm;
  std::vector<std::pair<std::string, std::vector<float>>> query;
  std::vector<std::pair<std::string, std::vector<float>>> key;
  std::vector<std::vector<float>> optimizer;
  int queue_capacity = 0, queue_dim = 0, queue_fill = 0, queue_write = 0;
  std::vector<double> queue;
};

Checkpoint make_checkpoint(const std::string& config_text, std::int64_t step, std::int64_t epoch,
                           const InputNorm& norm, EncoderState<float>& state, const Sgd& optimizer,
                           const FeatureQueue& queue);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Copies stored values into `encoder`; names and sizes must match exactly.
void load_parameters(Encoder<float>& encoder, const std::vector<std::pair<std::string, std::vector<float>>>& values);
void restore_queue(const Checkpoint& ckpt, FeatureQueue& queue);

}  // namespace aerossl
