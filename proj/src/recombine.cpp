#include "rvb/recombine.hpp"

#include <algorithm>
#include <future>
#include <numeric>
#include <string>

#include "rvb/error.hpp"

namespace rvb {

std::vector<std::vector<int>> partition(int n, int shards, std::uint64_t seed) {
  if (shards < 1 || shards > n) {
    throw InvalidV("number of shards must be between 1 and the number of subjects (" +
                   std::to_string(n) + "), got " + std::to_string(shards));
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed, 0, 0x5A4Du);
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle.
  for (int k = n - 1; k > 0; --k) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(k + 1));
    std::swap(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<std::vector<int>> out(static_cast<std::size_t>(shards));
  const int base = n / shards;
  const int extra = n % shards;
  int pos = 0;
  for (int v = 0; v < shards; ++v) {
    const int size = base + (v < extra ? 1 : 0);
    auto& shard = out[static_cast<std::size_t>(v)];
    shard.assign(order.begin() + pos, order.begin() + pos + size);
    std::sort(shard.begin(), shard.end());
    pos += size;
  }
  return out;
}

GaussianFactor combine(const std::vector<GaussianFactor>& factors, const GaussianFactor& prior) {
  if (factors.empty()) throw InvalidV("combine needs at least one factor");
  const auto g = prior.mean.size();
  const double extra = static_cast<double>(factors.size()) - 1.0;
  const Matrix prior_prec = matcalc::spd_inverse(prior.cov);
  Matrix prec = -extra * prior_prec;
  Vector shift = -extra * (prior_prec * prior.mean);
  for (const auto& f : factors) {
    if (f.mean.size() != g || f.cov.rows() != g) throw LengthMismatch("factor dimension differs");
    const Matrix p = matcalc::spd_inverse(f.cov);
    prec += p;
    shift += p * f.mean;
  }
  GaussianFactor out;
  out.cov = matcalc::spd_inverse(prec);
  out.mean = out.cov * shift;
  return out;
}

GaussianFactor prior_factor(const Priors& pr, int p) {
  const auto* normal = std::get_if<NormalOmegaPrior>(&pr.omega_prior);
  if (normal == nullptr) {
    throw ConfigError("divide and recombine requires the normal-omega prior");
  }
  const auto q = normal->mean.size();
  GaussianFactor f;
  f.mean = Vector::Zero(p + q);
  f.mean.tail(q) = normal->mean;
  Vector var(p + q);
  var.head(p).setConstant(pr.sigma_beta2);
  var.tail(q) = normal->sd.cwiseAbs2();
  f.cov = var.asDiagonal();
  return f;
}

GaussianFactor global_factor(const FitResult& fit) {
  const VariationalState& st = fit.state;
  return {st.mu().tail(st.g()), st.block_cov(st.block_count() - 1)};
}

std::uint64_t shard_seed(std::uint64_t seed, int shard) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(shard), 0x5AADu};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

ShardedResult fit_sharded(const Dataset& data, const Priors& pr, const FitConfig& cfg,
                          int shards, std::uint64_t partition_seed) {
  if (cfg.fixed_omega) throw ConfigError("sharded fits estimate omega");
  const GaussianFactor prior = prior_factor(pr, data.p());
  ShardedResult out;
  out.members = partition(data.n(), shards, partition_seed);
  std::vector<Dataset> parts;
  parts.reserve(out.members.size());
  for (const auto& m : out.members) parts.push_back(data.subset(m));

  std::vector<std::future<FitResult>> jobs;
  for (int v = 0; v < shards; ++v) {
    FitConfig c = cfg;
    c.seed = shard_seed(cfg.seed, v);
    jobs.push_back(std::async(std::launch::async, [&parts, &pr, c, v] {
      return fit(parts[static_cast<std::size_t>(v)], pr, c);
    }));
  }
  std::vector<GaussianFactor> factors;
  for (int v = 0; v < shards; ++v) {
    try {
      out.shards.push_back(jobs[static_cast<std::size_t>(v)].get());
    } catch (const DivergedError& e) {
      // Drain the remaining jobs before reporting.
      for (int w = v + 1; w < shards; ++w) {
        try {
          jobs[static_cast<std::size_t>(w)].get();
        } catch (...) {
        }
      }
      throw DivergedError("shard " + std::to_string(v) + ": " + e.what());
    }
    factors.push_back(global_factor(out.shards.back()));
  }
  out.combined = combine(factors, prior);
  return out;
}

}  // namespace rvb
