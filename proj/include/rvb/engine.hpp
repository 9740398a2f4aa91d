#pragma once

// Stochastic variational fit of q(theta~) = N(mu, C C') with C block-diagonal
// lower triangular: one r x r block per subject and one block for the global
// parameters. Updates use a single reparameterised draw per iteration and
// Adam on (mu, v(C*)), where C* stores log diagonals.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "rvb/gradients.hpp"

namespace rvb {

enum class Estimator { L1, L2, L3 };

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct FitConfig {
  TransformMethod method = TransformMethod::Approach2;
  std::uint64_t seed = 1;
  long max_iter = 200000;
  int window = 1000;
  int tau = 5;
  AdamConfig adam;
  Estimator estimator = Estimator::L2;
  int elbo_draws = 1000;
  // When set, omega is held at this value and only beta is global.
  std::optional<Vector> fixed_omega;
};

class VariationalState {
 public:
  VariationalState() = default;
  // mu = 0, C = blockdiag(I, ..., I, global_scale * I).
  VariationalState(int n, int r, int g, double global_scale = 0.1);

  int n() const noexcept { return n_; }
  int r() const noexcept { return r_; }
  int g() const noexcept { return g_; }
  int dim() const noexcept { return n_ * r_ + g_; }
  int block_count() const noexcept { return n_ + 1; }
  int block_offset(int k) const noexcept { return k * r_; }
  int block_size(int k) const noexcept { return k < n_ ? r_ : g_; }

  Vector& mu() noexcept { return mu_; }
  const Vector& mu() const noexcept { return mu_; }
  const Matrix& block(int k) const { return blocks_[static_cast<std::size_t>(k)]; }
  void set_block(int k, Matrix c);

  // theta~ = C s + mu
  Vector transform(const Vector& s) const;
  // C^{-1}(theta~ - mu)
  Vector standardise(const Vector& theta) const;
  // C^{-T} x
  Vector solve_transpose(const Vector& x) const;
  double log_det_c() const;
  // Marginal standard deviations sqrt(diag(C C')).
  Vector marginal_sd() const;
  // Covariance of block k.
  Matrix block_cov(int k) const;

  // [mu, v(C*_1), ..., v(C*_global)]
  Vector pack() const;
  void unpack(const Vector& packed);
  int packed_size() const noexcept;

 private:
  int n_ = 0;
  int r_ = 0;
  int g_ = 0;
  Vector mu_;
  std::vector<Matrix> blocks_;
};

struct AdamState {
  Vector m;
  Vector v;
  long t = 0;

  explicit AdamState(int size = 0) : m(Vector::Zero(size)), v(Vector::Zero(size)) {}
  // Ascent step on x with gradient estimate grad.
  void update(Vector& x, const Vector& grad, const AdamConfig& cfg);
};

struct GradientEstimate {
  Vector mu;
  Vector c;  // concatenated v() of each block, raw C coordinates
};

// Deterministic stream for (seed, iteration, attempt).
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t iteration, std::uint64_t stream);
Vector draw_standard_normal(int d, std::mt19937_64& rng);

GradientEstimate estimate(const VariationalState& state, const Vector& s, const Vector& grad,
                          Estimator which);
// Same estimate in packed (mu, v(C*)) coordinates.
Vector packed_gradient(const VariationalState& state, const GradientEstimate& est);

// log q(theta~) without the d/2 log(2 pi) constant.
double log_q(const VariationalState& state, const Vector& theta);

// OLS slope of the trailing min(tau, size) window means is negative.
bool should_stop(const std::vector<double>& means, int tau);

// The model evaluated at a point of theta~ space, with the layout of the
// variational state.
class Objective {
 public:
  Objective(const Dataset& data, const Priors& pr, TransformMethod method,
            std::optional<Vector> fixed_omega = std::nullopt);

  int global_dim() const noexcept;
  int dim() const noexcept { return data_->n() * data_->r() + global_dim(); }
  GlobalParams global_params(const Vector& theta) const;
  // Value and gradient of the transformed log joint.
  std::pair<double, Vector> evaluate(const Vector& theta) const;

  const Dataset& data() const noexcept { return *data_; }
  const Priors& priors() const noexcept { return *pr_; }
  TransformMethod method() const noexcept { return method_; }
  const std::optional<Vector>& fixed_omega() const noexcept { return fixed_omega_; }

 private:
  const Dataset* data_;
  const Priors* pr_;
  TransformMethod method_;
  std::optional<Vector> fixed_omega_;
};

struct StepOutcome {
  double elbo = 0.0;
  int retries = 0;
};

// One iteration: draw, evaluate, estimate, Adam. The returned ELBO sample uses
// the pre-update state.
StepOutcome step(VariationalState& state, AdamState& adam, const Objective& obj,
                 const FitConfig& cfg, long iteration);

struct FitResult {
  VariationalState state;
  std::vector<double> trace;  // window means of the ELBO samples
  long iterations = 0;
  double seconds = 0.0;
  double elbo = 0.0;     // post-hoc estimate
  double elbo_se = 0.0;  // its Monte Carlo standard error
  bool converged = false;
  int retries = 0;
  TransformMethod method = TransformMethod::Approach2;
  std::optional<Vector> fixed_omega;
};

// Monte Carlo ELBO estimate at a fixed state; returns (mean, standard error).
std::pair<double, double> estimate_elbo(const VariationalState& state, const Objective& obj,
                                        int draws, std::uint64_t seed);

FitResult fit(const Dataset& data, const Priors& pr, const FitConfig& cfg);

}  // namespace rvb
