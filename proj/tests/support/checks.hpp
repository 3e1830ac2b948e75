#pragma once

// Property and oracle suites shared by the unit tests and the acceptance
// runner. Each returns a verdict with a one-line summary of what was measured.

#include <cstdint>
#include <string>
#include <vector>

#include "aerossl/config.hpp"
#include "aerossl/encoder.hpp"
#include "aerossl/tiling.hpp"

namespace checks {

struct Verdict {
  bool pass = true;
  std::string detail;
  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

/// Loss values against the brute-force oracles on `instances` random inputs per loss.
Verdict loss_oracles(int instances, std::uint64_t seed, double tol = 1e-10);

/// Weight-boundary identities of the combined losses.
Verdict boundary_collapses(int instances, std::uint64_t seed, double tol = 1e-10);

/// Analytic vs central-difference gradients of every loss through a toy encoder.
Verdict gradient_checks(int configs, std::uint64_t seed, double max_rel = 1e-4);

/// Queue FIFO/capacity under random pushes and momentum-encoder closed form.
Verdict moco_mechanics(int pushes, int steps, std::uint64_t seed);

/// Monotone inertia on random instances and exhaustive optimum on small ones.
Verdict kmeans_properties(int instances, std::uint64_t seed);

/// kNN monitor on separable embeddings and against the brute-force oracle.
Verdict knn_properties(int instances, std::uint64_t seed);

/// Byte-identical reruns and checkpoint-resume equivalence of small pretraining runs.
Verdict determinism(const std::string& work_dir);

/// Manifest invariants over several synthetic builds.
Verdict dataset_invariants(const std::string& work_dir, const std::vector<std::uint64_t>& seeds);

/// Invariants of one downstream manifest (splits, ratio recount, balance, crop geometry).
Verdict downstream_invariants(const aerossl::DatasetManifest& m, const std::vector<aerossl::SourceFrame>& frames,
                              double bg_per_fg);

/// Invariants of one pretraining manifest, including a scan of its CSV text for labels.
Verdict pretrain_invariants(const aerossl::DatasetManifest& m, const std::vector<aerossl::SourceFrame>& frames,
                            const std::string& csv_path);

/// Tiny 2-layer encoder (linear backbone + heads) on `side` x `side` inputs.
aerossl::Encoder<double> toy_encoder(int side, int feature_dim, int hidden, int proj, std::uint64_t seed);

/// Small desk-scale configuration for quick pretraining runs.
aerossl::RunConfig tiny_run_config(aerossl::Strategy strategy, std::uint64_t seed);

/// Patches for tiny runs, derived from a few small synthetic frames.
std::vector<aerossl::Image8> tiny_patches(std::uint64_t seed, int count, int size);

std::string read_file(const std::string& path);

}  // namespace checks
