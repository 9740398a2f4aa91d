#include "rvb/model.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "rvb/error.hpp"

namespace rvb {

using matcalc::half_size;

Dataset::Dataset(FamilyKind family, int p, int r, std::vector<Subject> subjects)
    : family_(family), p_(p), r_(r), subjects_(std::move(subjects)) {
  if (p_ < 0 || r_ < 1) throw DataError("dataset needs p >= 0 and r >= 1");
  eta_hat_.reserve(subjects_.size());
  for (std::size_t i = 0; i < subjects_.size(); ++i) {
    Subject& s = subjects_[i];
    const std::string where = "subject " + std::to_string(i);
    const Eigen::Index ni = s.y.size();
    if (ni < 1) throw DataError(where + " has no observations");
    if (s.trials.size() == 0) s.trials = Vector::Ones(ni);
    if (s.trials.size() != ni || s.x.rows() != ni || s.z.rows() != ni) {
      throw LengthMismatch(where + ": y, trials, X and Z disagree in row count");
    }
    if (s.x.cols() != p_ || s.z.cols() != r_) {
      throw LengthMismatch(where + ": design column counts differ from (p, r)");
    }
    if (!s.x.allFinite() || !s.z.allFinite()) throw DataError(where + ": non-finite design entry");
    if (family_ == FamilyKind::Bernoulli) s.trials.setOnes();
    Vector eh(ni);
    for (Eigen::Index j = 0; j < ni; ++j) {
      try {
        validate_observation(family_, s.y(j), s.trials(j));
      } catch (const InvalidResponse& e) {
        throw InvalidResponse(where + ", observation " + std::to_string(j) + ": " + e.what());
      }
      eh(j) = eta_hat_reg(family_, s.y(j), s.trials(j));
    }
    Vector h2(ni);
    Vector work(ni);
    for (Eigen::Index j = 0; j < ni; ++j) {
      const LogPartition lp = log_partition(family_, s.trials(j), eh(j));
      h2(j) = lp.h2;
      work(j) = s.y(j) - lp.h1 + lp.h2 * eh(j);
    }
    ExpansionTerms ex;
    const Matrix hz = h2.asDiagonal() * s.z;
    ex.zhz = s.z.transpose() * hz;
    ex.zhx = hz.transpose() * s.x;
    ex.zwork = s.z.transpose() * work;
    expansion_.push_back(std::move(ex));
    eta_hat_.push_back(std::move(eh));
  }
}

long Dataset::observations() const noexcept {
  long total = 0;
  for (const auto& s : subjects_) total += static_cast<long>(s.y.size());
  return total;
}

Dataset Dataset::subset(std::span<const int> indices) const {
  std::vector<Subject> picked;
  picked.reserve(indices.size());
  for (int i : indices) {
    if (i < 0 || i >= n()) throw DataError("subset index out of range");
    picked.push_back(subjects_[static_cast<std::size_t>(i)]);
  }
  return Dataset(family_, p_, r_, std::move(picked));
}

GlobalParams::GlobalParams(Vector beta, Vector omega)
    : beta_(std::move(beta)), omega_(std::move(omega)) {
  r_ = matcalc::order_from_half_size(static_cast<int>(omega_.size()));
  w_ = matcalc::unpack_log_diag(omega_, r_);
  precision_ = w_ * w_.transpose();
  w_inv_t_ = w_.triangularView<Eigen::Lower>().solve(Matrix::Identity(r_, r_)).transpose();
  log_det_ = 0.0;
  for (int i = 0; i < r_; ++i) log_det_ += 2.0 * std::log(w_(i, i));
}

Priors Priors::wishart(double nu, const Matrix& scale, double sigma_beta2) {
  const auto r = scale.rows();
  if (!(nu > static_cast<double>(r) - 1.0)) throw ConfigError("Wishart prior needs nu > r - 1");
  WishartPrior w;
  w.nu = nu;
  w.scale = 0.5 * (scale + scale.transpose());
  try {
    w.scale_inv = matcalc::spd_inverse(w.scale);
  } catch (const NotPositiveDefinite&) {
    throw ConfigError("Wishart scale matrix is not positive definite");
  }
  Priors p;
  p.sigma_beta2 = sigma_beta2;
  p.omega_prior = std::move(w);
  return p;
}

Priors Priors::normal_omega(int r, double sd, double sigma_beta2) {
  NormalOmegaPrior n;
  n.mean = Vector::Zero(half_size(r));
  n.sd = Vector::Constant(half_size(r), sd);
  Priors p;
  p.sigma_beta2 = sigma_beta2;
  p.omega_prior = std::move(n);
  return p;
}

namespace {

struct Stacked {
  Matrix x;
  Vector y;
  Vector trials;
};

Stacked stack(const Dataset& data) {
  Stacked s;
  const auto total = data.observations();
  s.x.resize(total, data.p());
  s.y.resize(total);
  s.trials.resize(total);
  Eigen::Index row = 0;
  for (const auto& sub : data.subjects()) {
    const auto ni = sub.y.size();
    s.x.middleRows(row, ni) = sub.x;
    s.y.segment(row, ni) = sub.y;
    s.trials.segment(row, ni) = sub.trials;
    row += ni;
  }
  return s;
}

double pooled_deviance(FamilyKind family, const Stacked& s, const Vector& beta) {
  const Vector eta = s.x * beta;
  double ll = 0.0;
  for (Eigen::Index k = 0; k < eta.size(); ++k) ll += loglik(family, s.y(k), s.trials(k), eta(k));
  return -2.0 * ll;
}

}  // namespace

PooledGlmFit fit_pooled_glm(const Dataset& data) {
  constexpr int kMaxIter = 25;
  constexpr double kTol = 1e-8;
  const FamilyKind family = data.family();
  const Stacked s = stack(data);
  const int p = data.p();
  if (s.x.rows() < p || Eigen::ColPivHouseholderQR<Matrix>(s.x).rank() < p) {
    throw RankDeficient("pooled fixed-effect design is rank deficient");
  }

  Vector beta = Vector::Zero(p);
  if (family == FamilyKind::Poisson) {
    for (int c = 0; c < p; ++c) {
      if ((s.x.col(c).array() == 1.0).all()) {
        beta(c) = std::log(s.y.mean() + 0.5);
        break;
      }
    }
  }

  double dev = pooled_deviance(family, s, beta);
  for (int it = 1; it <= kMaxIter; ++it) {
    const Vector eta = s.x * beta;
    Vector score(eta.size());
    Vector weight(eta.size());
    for (Eigen::Index k = 0; k < eta.size(); ++k) {
      const LogPartition lp = log_partition(family, s.trials(k), eta(k));
      score(k) = s.y(k) - lp.h1;
      weight(k) = lp.h2;
    }
    const Matrix info = s.x.transpose() * weight.asDiagonal() * s.x;
    Eigen::LDLT<Matrix> ldlt(info);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
      throw RankDeficient("IRLS information matrix is singular");
    }
    Vector step = ldlt.solve(s.x.transpose() * score);

    Vector next = beta + step;
    double next_dev = pooled_deviance(family, s, next);
    for (int halving = 0; halving < 30 && !(next_dev <= dev); ++halving) {
      step *= 0.5;
      next = beta + step;
      next_dev = pooled_deviance(family, s, next);
    }
    if (!std::isfinite(next_dev)) throw IrlsDiverged("IRLS produced a non-finite deviance");
    const double change = std::abs(next_dev - dev) / (std::abs(next_dev) + 0.1);
    beta = next;
    dev = next_dev;
    if (change < kTol) return {beta, it, dev};
  }
  throw IrlsDiverged("IRLS did not converge in 25 iterations");
}

Priors default_prior(const Dataset& data, double sigma_beta2) {
  if (data.n() == 0) throw DataError("default prior needs at least one subject");
  const PooledGlmFit glm = fit_pooled_glm(data);
  const int r = data.r();
  Matrix info = Matrix::Zero(r, r);
  for (const auto& sub : data.subjects()) {
    const Vector eta = sub.x * glm.beta;
    Vector w(eta.size());
    for (Eigen::Index j = 0; j < eta.size(); ++j) {
      w(j) = log_partition(data.family(), sub.trials(j), eta(j)).h2;
    }
    info += sub.z.transpose() * w.asDiagonal() * sub.z;
  }
  info /= static_cast<double>(data.n());
  // R = info^{-1}; IW(rho, rho R) on Omega^{-1} <=> W(rho, R^{-1} / rho) on Omega.
  const double rho = r == 1 ? 1.0 : static_cast<double>(r + 1);
  return Priors::wishart(rho, info / rho, sigma_beta2);
}

double log_p_omega(const GlobalParams& gp, const Priors& pr) {
  const int r = gp.r();
  if (const auto* normal = std::get_if<NormalOmegaPrior>(&pr.omega_prior)) {
    return -0.5 * ((gp.omega() - normal->mean).array() / normal->sd.array()).square().sum();
  }
  const WishartPrior& w = pr.wishart_prior();
  double value = 0.5 * (w.nu - r - 1.0) * gp.log_det_precision() -
                 0.5 * (w.scale_inv * gp.precision()).trace() + r * std::log(2.0);
  for (int i = 0; i < r; ++i) value += (r - i + 1) * std::log(gp.w()(i, i));
  return value;
}

double log_p_beta(const GlobalParams& gp, const Priors& pr) {
  return -0.5 * gp.beta().squaredNorm() / pr.sigma_beta2;
}

Vector prior_grad_omega(const GlobalParams& gp, const Priors& pr) {
  const int r = gp.r();
  if (const auto* normal = std::get_if<NormalOmegaPrior>(&pr.omega_prior)) {
    return -((gp.omega() - normal->mean).array() / normal->sd.array().square()).matrix();
  }
  const WishartPrior& w = pr.wishart_prior();
  const Matrix inner = (w.nu - r - 1.0) * gp.w_inv_t() - w.scale_inv * gp.w();
  Vector g = matcalc::dweight(gp.w()).cwiseProduct(matcalc::halfvec(inner));
  for (int i = 0; i < r; ++i) g(matcalc::half_index(i, i, r)) += r - i + 1;
  return g;
}

Vector subject_grad_omega(const GlobalParams& gp, const Vector& b) {
  const Matrix inner = gp.w_inv_t() - b * (b.transpose() * gp.w());
  return matcalc::dweight(gp.w()).cwiseProduct(matcalc::halfvec(inner));
}

double log_subject(const Dataset& data, int i, const GlobalParams& gp, const Vector& b) {
  const Subject& s = data.subject(i);
  const Vector eta = s.x * gp.beta() + s.z * b;
  double value = 0.0;
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    value += loglik(data.family(), s.y(j), s.trials(j), eta(j));
  }
  return value - 0.5 * b.dot(gp.precision() * b) + 0.5 * gp.log_det_precision();
}

double log_joint(const Dataset& data, const GlobalParams& gp, std::span<const Vector> b,
                 const Priors& pr) {
  if (static_cast<int>(b.size()) != data.n()) {
    throw LengthMismatch("log_joint: one random-effect vector per subject required");
  }
  double value = log_p_beta(gp, pr) + log_p_omega(gp, pr);
  for (int i = 0; i < data.n(); ++i) value += log_subject(data, i, gp, b[static_cast<std::size_t>(i)]);
  return value;
}

double log_joint_reparam(const Dataset& data, const GlobalParams& gp,
                         std::span<const Vector> b_tilde,
                         std::span<const LocalTransform> transforms, const Priors& pr) {
  if (static_cast<int>(b_tilde.size()) != data.n() ||
      static_cast<int>(transforms.size()) != data.n()) {
    throw LengthMismatch("log_joint_reparam: one transform and b~ per subject required");
  }
  std::vector<Vector> b(b_tilde.size());
  double jacobian = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const LocalTransform& t = transforms[i];
    b[i] = t.chol * b_tilde[i] + t.lambda;
    jacobian += t.chol.diagonal().array().log().sum();
  }
  return log_joint(data, gp, b, pr) + jacobian;
}

}  // namespace rvb
