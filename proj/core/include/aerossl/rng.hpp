#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace aerossl {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed and a path of
/// indices (e.g. {step, sample}). Streams are keyed, not sequential, so any
/// step can be replayed without consuming earlier draws.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path);

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> path = {}) {
  return Rng(derive_seed(base, path));
}

double uniform01(Rng& rng);
int uniform_int(Rng& rng, int lo, int hi);  // inclusive
double sample_beta(Rng& rng, double alpha, double beta);

}  // namespace aerossl
