#pragma once

// Random GLMM configurations and a finite-difference oracle shared by the
// unit tests and the acceptance gate.

#include <random>
#include <vector>

#include "rvb/gradients.hpp"

namespace rvb::testing {

struct Config {
  Dataset data;
  GlobalParams gp;
  std::vector<Vector> b_tilde;
  Priors priors;
};

inline double trials_for(FamilyKind f) { return f == FamilyKind::Binomial ? 10.0 : 1.0; }

// n subjects with 3..6 observations each; Z holds an intercept plus random
// covariates, X an intercept plus random covariates. Responses are simulated
// from the model at the returned global parameters.
inline Config random_config(FamilyKind family, int n, int p, int r, std::mt19937_64& rng) {
  std::normal_distribution<double> norm(0.0, 1.0);
  std::uniform_int_distribution<int> size(3, 6);
  Vector beta(p);
  for (int k = 0; k < p; ++k) beta(k) = 0.4 * norm(rng);
  Matrix w = Matrix::Zero(r, r);
  for (int c = 0; c < r; ++c) {
    w(c, c) = std::exp(0.3 * norm(rng)) * 1.2;
    for (int i = c + 1; i < r; ++i) w(i, c) = 0.3 * norm(rng);
  }
  GlobalParams gp(beta, matcalc::pack_log_diag(w));
  const Matrix cov = matcalc::spd_inverse(gp.precision());
  const Matrix cov_l = matcalc::cholesky(cov);

  std::vector<Subject> subjects;
  for (int i = 0; i < n; ++i) {
    Subject s;
    const int ni = size(rng);
    s.x.resize(ni, p);
    s.z.resize(ni, r);
    for (int j = 0; j < ni; ++j) {
      for (int k = 0; k < p; ++k) s.x(j, k) = k == 0 ? 1.0 : 0.7 * norm(rng);
      for (int k = 0; k < r; ++k) s.z(j, k) = k == 0 ? 1.0 : 0.7 * norm(rng);
    }
    Vector z0(r);
    for (int k = 0; k < r; ++k) z0(k) = norm(rng);
    const Vector b = cov_l * z0;
    const Vector eta = s.x * beta + s.z * b;
    s.y.resize(ni);
    s.trials = Vector::Constant(ni, trials_for(family));
    for (int j = 0; j < ni; ++j) {
      switch (family) {
        case FamilyKind::Poisson:
          s.y(j) = std::poisson_distribution<int>(std::exp(std::min(eta(j), 4.0)))(rng);
          break;
        case FamilyKind::Binomial:
          s.y(j) = std::binomial_distribution<int>(10, logistic(eta(j)))(rng);
          break;
        case FamilyKind::Bernoulli:
          s.y(j) = std::bernoulli_distribution(logistic(eta(j)))(rng) ? 1.0 : 0.0;
          break;
        case FamilyKind::GaussianUnit:
          s.y(j) = eta(j) + norm(rng);
          break;
      }
    }
    subjects.push_back(std::move(s));
  }
  std::vector<Vector> bt;
  for (int i = 0; i < n; ++i) {
    Vector v(r);
    for (int k = 0; k < r; ++k) v(k) = norm(rng);
    bt.push_back(v);
  }
  Matrix scale = Matrix::Identity(r, r) * 0.5;
  return {Dataset(family, p, r, std::move(subjects)), gp, std::move(bt),
          Priors::wishart(r + 1.0, scale, 100.0)};
}

// log_joint_reparam at the unpacked theta~; transforms rebuilt from theta_G.
inline double reparam_value(const Dataset& data, const Vector& theta, TransformMethod method,
                            const Priors& pr) {
  const int n = data.n();
  const int r = data.r();
  const int p = data.p();
  std::vector<Vector> bt(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) bt[static_cast<std::size_t>(i)] = theta.segment(i * r, r);
  GlobalParams gp(theta.segment(n * r, p), theta.tail(matcalc::half_size(r)));
  const auto transforms = build_transforms(data, gp, method);
  return log_joint_reparam(data, gp, bt, transforms, pr);
}

inline Vector pack_theta(const std::vector<Vector>& bt, const GlobalParams& gp) {
  const Eigen::Index r = bt.empty() ? 0 : bt.front().size();
  Vector theta(static_cast<Eigen::Index>(bt.size()) * r + gp.beta().size() + gp.omega().size());
  Eigen::Index pos = 0;
  for (const auto& v : bt) {
    theta.segment(pos, r) = v;
    pos += r;
  }
  theta.segment(pos, gp.beta().size()) = gp.beta();
  theta.tail(gp.omega().size()) = gp.omega();
  return theta;
}

// Central differences with step h in every coordinate.
inline Vector fd_gradient(const Dataset& data, const Vector& theta, TransformMethod method,
                          const Priors& pr, double h = 1e-5) {
  Vector g(theta.size());
  Vector t = theta;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    t(k) = theta(k) + h;
    const double up = reparam_value(data, t, method, pr);
    t(k) = theta(k) - h;
    const double down = reparam_value(data, t, method, pr);
    t(k) = theta(k);
    g(k) = (up - down) / (2.0 * h);
  }
  return g;
}

inline double max_rel_error(const Vector& analytic, const Vector& reference) {
  return ((analytic - reference).array().abs() / (1.0 + reference.array().abs())).maxCoeff();
}

}  // namespace rvb::testing
