#pragma once

// Two-level GLMM: grouped data, global parameters (beta, omega), priors and
// the log joint density before and after the local affine reparameterisation.
//
// Constant convention: every additive term that does not depend on the model
// parameters (factorials, binomial coefficients, 2*pi factors, the Wishart
// normaliser) is dropped, consistently across the log joint, the priors and
// the variational entropy.

#include <span>
#include <variant>
#include <vector>

#include "rvb/family.hpp"
#include "rvb/matcalc.hpp"

namespace rvb {

struct Subject {
  Vector y;
  Vector trials;  // Binomial trial counts; ones for every other family
  Matrix x;       // n_i x p
  Matrix z;       // n_i x r
};

// Pieces of the second-order expansion about eta_hat that do not depend on
// the global parameters, cached per subject.
struct ExpansionTerms {
  Matrix zhz;   // Z' H(eta_hat) Z
  Matrix zhx;   // Z' H(eta_hat) X
  Vector zwork; // Z' (y - g(eta_hat) + H(eta_hat) eta_hat)
};

class Dataset {
 public:
  Dataset(FamilyKind family, int p, int r, std::vector<Subject> subjects);

  FamilyKind family() const noexcept { return family_; }
  int n() const noexcept { return static_cast<int>(subjects_.size()); }
  int p() const noexcept { return p_; }
  int r() const noexcept { return r_; }
  long observations() const noexcept;

  const Subject& subject(int i) const { return subjects_[static_cast<std::size_t>(i)]; }
  const std::vector<Subject>& subjects() const noexcept { return subjects_; }
  // Regularised natural-parameter estimates, one per observation of subject i.
  const Vector& eta_hat(int i) const { return eta_hat_[static_cast<std::size_t>(i)]; }
  const ExpansionTerms& expansion(int i) const { return expansion_[static_cast<std::size_t>(i)]; }

  Dataset subset(std::span<const int> indices) const;

 private:
  FamilyKind family_;
  int p_;
  int r_;
  std::vector<Subject> subjects_;
  std::vector<Vector> eta_hat_;
  std::vector<ExpansionTerms> expansion_;
};

// theta_G = (beta, omega) with omega = v(W*), W* the Cholesky factor of the
// random-effect precision with log-transformed diagonal.
class GlobalParams {
 public:
  GlobalParams(Vector beta, Vector omega);

  const Vector& beta() const noexcept { return beta_; }
  const Vector& omega() const noexcept { return omega_; }
  int p() const noexcept { return static_cast<int>(beta_.size()); }
  int r() const noexcept { return r_; }

  const Matrix& w() const noexcept { return w_; }
  const Matrix& precision() const noexcept { return precision_; }
  // W^{-T}
  const Matrix& w_inv_t() const noexcept { return w_inv_t_; }
  // log|Omega| = 2 sum log W_ii
  double log_det_precision() const noexcept { return log_det_; }

 private:
  Vector beta_;
  Vector omega_;
  int r_;
  Matrix w_;
  Matrix precision_;
  Matrix w_inv_t_;
  double log_det_ = 0.0;
};

struct WishartPrior {
  double nu = 1.0;
  Matrix scale;
  Matrix scale_inv;
};

// Independent normals on the omega coordinates (used by sharded fitting).
struct NormalOmegaPrior {
  Vector mean;
  Vector sd;
};

struct Priors {
  double sigma_beta2 = 100.0;
  std::variant<WishartPrior, NormalOmegaPrior> omega_prior;

  static Priors wishart(double nu, const Matrix& scale, double sigma_beta2 = 100.0);
  static Priors normal_omega(int r, double sd = 10.0, double sigma_beta2 = 100.0);

  bool is_wishart() const noexcept { return std::holds_alternative<WishartPrior>(omega_prior); }
  const WishartPrior& wishart_prior() const { return std::get<WishartPrior>(omega_prior); }
};

struct PooledGlmFit {
  Vector beta;
  int iterations = 0;
  double deviance = 0.0;
};

// IRLS for the GLM obtained by pooling all subjects with b_i = 0.
PooledGlmFit fit_pooled_glm(const Dataset& data);

// Default conjugate Wishart prior built from the pooled GLM fit.
Priors default_prior(const Dataset& data, double sigma_beta2 = 100.0);

// log p(omega) including the Jacobian of omega -> v(Omega).
double log_p_omega(const GlobalParams& gp, const Priors& pr);
double log_p_beta(const GlobalParams& gp, const Priors& pr);

// Gradient of log p(omega) in omega.
Vector prior_grad_omega(const GlobalParams& gp, const Priors& pr);
// Gradient in omega of (1/2) log|Omega| - (1/2) b' Omega b.
Vector subject_grad_omega(const GlobalParams& gp, const Vector& b);

// log p(y_i, b_i | theta_G) = sum_j loglik - b' Omega b / 2 + log|Omega| / 2.
double log_subject(const Dataset& data, int i, const GlobalParams& gp, const Vector& b);

double log_joint(const Dataset& data, const GlobalParams& gp, std::span<const Vector> b,
                 const Priors& pr);

// Affine map b = L b~ + lambda approximating p(b_i | theta_G, y_i) by
// N(lambda, Lambda) with L L' = Lambda.
struct LocalTransform {
  Vector lambda;
  Matrix cov;        // Lambda
  Matrix chol;       // L
  Vector mode_eta;   // X beta + Z b_hat (mode-based transforms only)
};

double log_joint_reparam(const Dataset& data, const GlobalParams& gp,
                         std::span<const Vector> b_tilde,
                         std::span<const LocalTransform> transforms, const Priors& pr);

}  // namespace rvb
