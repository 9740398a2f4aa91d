#pragma once

// Divide and recombine: fit disjoint subject shards independently and merge
// their Gaussian posteriors for theta_G, removing the prior counted V - 1
// extra times.

#include <cstdint>
#include <vector>

#include "rvb/engine.hpp"

namespace rvb {

struct GaussianFactor {
  Vector mean;
  Matrix cov;
};

// Balanced random partition of {0..n-1}: shard sizes differ by at most one,
// larger shards first; indices within a shard are increasing.
std::vector<std::vector<int>> partition(int n, int shards, std::uint64_t seed);

GaussianFactor combine(const std::vector<GaussianFactor>& factors, const GaussianFactor& prior);

// Gaussian prior on (beta, omega) implied by a normal-omega prior.
GaussianFactor prior_factor(const Priors& pr, int p);

// q(theta_G) from the global block of a fitted state.
GaussianFactor global_factor(const FitResult& fit);

// Seed for shard v derived from the run seed.
std::uint64_t shard_seed(std::uint64_t seed, int shard);

struct ShardedResult {
  std::vector<std::vector<int>> members;
  std::vector<FitResult> shards;
  GaussianFactor combined;
};

// Shards run concurrently; the first failure is rethrown naming the shard.
ShardedResult fit_sharded(const Dataset& data, const Priors& pr, const FitConfig& cfg,
                          int shards, std::uint64_t partition_seed);

}  // namespace rvb
