#pragma once

// Simulation-based summaries of a fitted q: global parameters, the scale
// parameters of Omega^{-1}, and per-subject marginals of b_i obtained by
// pushing draws of (theta_G, b~_i) through transforms rebuilt per draw.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rvb/engine.hpp"

namespace rvb {

// sigma for r = 1; sigma1..sigmar then rho_kl (k > l, column order) for r > 1.
std::vector<std::string> scale_names(int r);
// Standard deviations and correlations of Omega^{-1} for one global draw.
Vector scale_params(const GlobalParams& gp);
// Inverse of scale_params: Omega^{-1} from (sigmas, correlations).
Matrix covariance_from_scales(const Vector& scales, int r);

struct Moments {
  Vector mean;
  Vector sd;
};

struct SubjectMarginals {
  Matrix b_mean;  // n x r
  Matrix b_sd;
  Matrix bt_mean;  // q marginals of b~_i
  Matrix bt_sd;
};

struct PosteriorSummary {
  Moments global;  // q marginals of (beta, omega) coordinates
  Moments scales;
  SubjectMarginals subjects;
  int draws = 0;
  int rejected = 0;
  bool rejection_warning = false;  // more than 1% of global draws rejected
};

struct PosteriorDraw {
  const GlobalParams* gp;
  const std::vector<Vector>* b;
};

// Calls visit for each accepted draw. Global draws whose transforms cannot be
// built are rejected and redrawn; the rejection count is returned.
int simulate_b(const Dataset& data, const Priors& pr, const FitResult& fit, int draws,
               std::uint64_t seed, const std::function<void(const PosteriorDraw&)>& visit);

PosteriorSummary summarise(const Dataset& data, const Priors& pr, const FitResult& fit,
                           int draws, std::uint64_t seed);

// Scale-parameter moments under a Gaussian on theta_G = (beta, omega).
Moments scale_moments(const Vector& mean, const Matrix& cov, int p, int r, int draws,
                      std::uint64_t seed);

struct Comparison {
  Matrix r1;  // (mean_va - mean_ref) / sd_va
  Matrix r2;  // sd_ref / sd_va
};
Comparison compare_metrics(const Matrix& va_means, const Matrix& va_sds, const Matrix& ref_means,
                           const Matrix& ref_sds);

}  // namespace rvb
