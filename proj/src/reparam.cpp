#include "rvb/reparam.hpp"

#include <cmath>
#include <string>

#include "rvb/error.hpp"

namespace rvb {
namespace {

constexpr int kMaxNewton = 100;
constexpr int kMaxHalvings = 20;
constexpr double kStationarityTol = 1e-8;

// Z' diag(w) Z without an n_i x n_i temporary.
Matrix weighted_crossprod(const Matrix& z, const Vector& w) {
  const auto r = z.cols();
  Matrix out = Matrix::Zero(r, r);
  for (Eigen::Index j = 0; j < z.rows(); ++j) {
    out.selfadjointView<Eigen::Lower>().rankUpdate(z.row(j).transpose(), w(j));
  }
  return out.selfadjointView<Eigen::Lower>();
}

LocalTransform finish(Vector lambda, const Matrix& precision, Vector mode_eta) {
  LocalTransform t;
  t.cov = matcalc::spd_inverse(precision);
  t.chol = matcalc::cholesky(t.cov);
  t.lambda = std::move(lambda);
  t.mode_eta = std::move(mode_eta);
  return t;
}

// Objective, gradient and curvature weights at one point, from a single pass
// over the observations.
struct ModeEval {
  double f = 0.0;
  Vector eta;
  Vector grad;
  Vector h2;
};

ModeEval eval_mode(const Dataset& data, const Subject& s, const GlobalParams& gp,
                   const Vector& xb, const Vector& b) {
  ModeEval e;
  e.eta = xb + s.z * b;
  Vector resid(e.eta.size());
  e.h2.resize(e.eta.size());
  const Vector omega_b = gp.precision() * b;
  e.f = -0.5 * b.dot(omega_b);
  for (Eigen::Index j = 0; j < e.eta.size(); ++j) {
    const LogPartition lp = log_partition(data.family(), s.trials(j), e.eta(j));
    e.f += s.y(j) * e.eta(j) - lp.h;
    resid(j) = s.y(j) - lp.h1;
    e.h2(j) = lp.h2;
  }
  e.grad = s.z.transpose() * resid - omega_b;
  return e;
}

bool stationary(const ModeEval& e, const GlobalParams& gp, const Vector& b) {
  const double tol = kStationarityTol * (1.0 + (gp.precision() * b).lpNorm<Eigen::Infinity>());
  return e.grad.lpNorm<Eigen::Infinity>() < tol;
}

// One extra Newton step once the stopping rule holds. Quadratic convergence
// takes the mode to rounding level, which keeps the implicit derivative of
// b_hat consistent with finite differences of the transformed density.
void polish(const Dataset& data, const Subject& s, const GlobalParams& gp, const Vector& xb,
            Vector& b, ModeEval& e) {
  const Matrix neg_hess = gp.precision() + weighted_crossprod(s.z, e.h2);
  const Vector trial = b + Eigen::LLT<Matrix>(neg_hess).solve(e.grad);
  try {
    ModeEval next = eval_mode(data, s, gp, xb, trial);
    if (next.grad.lpNorm<Eigen::Infinity>() < e.grad.lpNorm<Eigen::Infinity>()) {
      b = trial;
      e = std::move(next);
    }
  } catch (const OverflowGuard&) {
  }
}

}  // namespace

std::string_view method_name(TransformMethod m) {
  return m == TransformMethod::Approach1 ? "a1" : "a2";
}

TransformMethod parse_method(std::string_view name) {
  if (name == "a1") return TransformMethod::Approach1;
  if (name == "a2") return TransformMethod::Approach2;
  throw ConfigError("unknown method '" + std::string(name) + "' (expected a1 or a2)");
}

LocalTransform transform_a1(const Dataset& data, int i, const GlobalParams& gp) {
  const ExpansionTerms& ex = data.expansion(i);
  LocalTransform t = finish(Vector(), gp.precision() + ex.zhz, Vector());
  t.lambda = t.cov * (ex.zwork - ex.zhx * gp.beta());
  return t;
}

LocalTransform transform_a1(const Dataset& data, int i, const GlobalParams& gp,
                            const Vector& eh) {
  const Subject& s = data.subject(i);
  if (eh.size() != s.y.size()) throw LengthMismatch("eta_hat length differs from n_i");
  const Vector xb = s.x * gp.beta();
  Vector h2(eh.size());
  Vector work(eh.size());
  for (Eigen::Index j = 0; j < eh.size(); ++j) {
    const LogPartition lp = log_partition(data.family(), s.trials(j), eh(j));
    h2(j) = lp.h2;
    work(j) = s.y(j) - lp.h1 + lp.h2 * (eh(j) - xb(j));
  }
  const Matrix precision = gp.precision() + weighted_crossprod(s.z, h2);
  LocalTransform t = finish(Vector(), precision, Vector());
  t.lambda = t.cov * (s.z.transpose() * work);
  return t;
}

Vector nr_init(const Dataset& data, int i, const GlobalParams& gp) {
  const Subject& s = data.subject(i);
  const int r = data.r();
  if (s.y.size() < r) return Vector::Zero(r);
  const Vector target = data.eta_hat(i) - s.x * gp.beta();
  Matrix ztz = s.z.transpose() * s.z;
  Eigen::LLT<Matrix> llt(ztz);
  const double scale = std::max(1.0, ztz.diagonal().maxCoeff());
  bool singular = llt.info() != Eigen::Success;
  if (!singular) {
    const auto d = Matrix(llt.matrixL()).diagonal();
    singular = d.minCoeff() * d.minCoeff() < 1e-12 * scale;
  }
  if (singular) {
    ztz.diagonal().array() += 1e-8 * scale;
    llt.compute(ztz);
  }
  return llt.solve(s.z.transpose() * target);
}

double conditional_log_density(const Dataset& data, int i, const GlobalParams& gp,
                               const Vector& b) {
  const Subject& s = data.subject(i);
  const Vector eta = s.x * gp.beta() + s.z * b;
  double value = -0.5 * b.dot(gp.precision() * b);
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    value += loglik(data.family(), s.y(j), s.trials(j), eta(j));
  }
  return value;
}

LocalTransform transform_a2(const Dataset& data, int i, const GlobalParams& gp) {
  const Subject& s = data.subject(i);
  const Vector xb = s.x * gp.beta();
  Vector b = nr_init(data, i, gp);

  // A start far in the Poisson overflow region is pulled back toward zero.
  ModeEval e;
  for (int shrink = 0;; ++shrink) {
    try {
      e = eval_mode(data, s, gp, xb, b);
      break;
    } catch (const OverflowGuard&) {
      if (shrink >= kMaxHalvings) throw ModeSearchFailed("mode search start overflows");
      b *= 0.5;
    }
  }

  for (int it = 0; it < kMaxNewton && !stationary(e, gp, b); ++it) {
    const Matrix neg_hess = gp.precision() + weighted_crossprod(s.z, e.h2);
    Vector step = Eigen::LLT<Matrix>(neg_hess).solve(e.grad);
    bool accepted = false;
    for (int halving = 0; halving <= kMaxHalvings && !accepted; ++halving) {
      const Vector trial = b + step;
      try {
        ModeEval next = eval_mode(data, s, gp, xb, trial);
        if (next.f >= e.f - 1e-12 * (1.0 + std::abs(e.f))) {
          b = trial;
          e = std::move(next);
          accepted = true;
        }
      } catch (const OverflowGuard&) {
        // treated as a decrease
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  if (!stationary(e, gp, b)) {
    throw ModeSearchFailed("conditional mode of subject " + std::to_string(i) +
                           " not found (gradient " +
                           std::to_string(e.grad.lpNorm<Eigen::Infinity>()) + ")");
  }
  polish(data, s, gp, xb, b, e);
  return finish(b, gp.precision() + weighted_crossprod(s.z, e.h2), std::move(e.eta));
}

LocalTransform build_transform(const Dataset& data, int i, const GlobalParams& gp,
                               TransformMethod method) {
  return method == TransformMethod::Approach1 ? transform_a1(data, i, gp)
                                              : transform_a2(data, i, gp);
}

std::vector<LocalTransform> build_transforms(const Dataset& data, const GlobalParams& gp,
                                             TransformMethod method) {
  std::vector<LocalTransform> out;
  out.reserve(static_cast<std::size_t>(data.n()));
  for (int i = 0; i < data.n(); ++i) out.push_back(build_transform(data, i, gp, method));
  return out;
}

Vector apply(const LocalTransform& t, const Vector& b) {
  return matcalc::lower_solve(t.chol, b - t.lambda);
}

Vector invert(const LocalTransform& t, const Vector& b_tilde) {
  return t.chol * b_tilde + t.lambda;
}

}  // namespace rvb
