#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "rvb/error.hpp"
#include "rvb/model.hpp"
#include "synthetic.hpp"

using namespace rvb;

namespace {

Dataset small_poisson() {
  const double xs[] = {0.1, -0.5, 1.2, 0.3, -1.0, 0.8, 0.0, 2.0};
  const double ys[] = {1, 0, 4, 2, 0, 3, 1, 9};
  std::vector<Subject> subjects;
  for (int g = 0; g < 2; ++g) {
    Subject s;
    s.y.resize(4);
    s.x.resize(4, 2);
    s.z = Matrix::Ones(4, 1);
    for (int j = 0; j < 4; ++j) {
      s.y(j) = ys[4 * g + j];
      s.x(j, 0) = 1.0;
      s.x(j, 1) = xs[4 * g + j];
    }
    subjects.push_back(s);
  }
  return Dataset(FamilyKind::Poisson, 2, 1, subjects);
}

// log |d v(Omega) / d omega| by finite differences.
double log_jacobian(const Vector& omega, int r) {
  const int g = static_cast<int>(omega.size());
  Matrix j(g, g);
  for (int k = 0; k < g; ++k) {
    Vector up = omega;
    Vector down = omega;
    up(k) += 1e-6;
    down(k) -= 1e-6;
    const Matrix wu = matcalc::unpack_log_diag(up, r);
    const Matrix wd = matcalc::unpack_log_diag(down, r);
    j.col(k) =
        (matcalc::halfvec(wu * wu.transpose()) - matcalc::halfvec(wd * wd.transpose())) / 2e-6;
  }
  return std::log(std::abs(j.determinant()));
}

Vector fd(const std::function<double(const Vector&)>& f, const Vector& x) {
  Vector g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vector up = x;
    Vector down = x;
    up(k) += 1e-6;
    down(k) -= 1e-6;
    g(k) = (f(up) - f(down)) / 2e-6;
  }
  return g;
}

}  // namespace

TEST_CASE("dataset validation") {
  Subject s;
  s.y = Vector::Ones(3);
  s.x = Matrix::Ones(3, 1);
  s.z = Matrix::Ones(2, 1);
  CHECK_THROWS_AS(Dataset(FamilyKind::Poisson, 1, 1, {s}), LengthMismatch);
  s.z = Matrix::Ones(3, 1);
  s.y(1) = -2.0;
  CHECK_THROWS_AS(Dataset(FamilyKind::Poisson, 1, 1, {s}), InvalidResponse);
  s.y(1) = 0.0;
  const Dataset d(FamilyKind::Poisson, 1, 1, {s, s});
  CHECK(d.n() == 2);
  CHECK(d.observations() == 6);
  CHECK(d.eta_hat(1)(1) == doctest::Approx(eta_hat_reg(FamilyKind::Poisson, 0.0, 1.0)));
  const int pick[] = {1};
  CHECK(d.subset(pick).n() == 1);
}

TEST_CASE("global parameters unpack the log-diagonal factor") {
  Vector omega(3);
  omega << std::log(2.0), 0.5, std::log(3.0);
  const GlobalParams gp(Vector::Zero(1), omega);
  Matrix w(2, 2);
  w << 2, 0, 0.5, 3;
  CHECK((gp.w() - w).norm() < 1e-14);
  CHECK((gp.precision() - w * w.transpose()).norm() < 1e-14);
  CHECK((gp.w_inv_t() - w.inverse().transpose()).norm() < 1e-14);
  CHECK(gp.log_det_precision() == doctest::Approx(std::log(36.0)));
}

TEST_CASE("wishart density on omega includes the Jacobian") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> norm;
  for (int r = 1; r <= 3; ++r) {
    Matrix a(r, r);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) a(i, j) = norm(rng);
    const Matrix scale = a * a.transpose() + Matrix::Identity(r, r);
    const Priors pr = Priors::wishart(r + 2.5, scale);
    Vector omega(matcalc::half_size(r));
    for (Eigen::Index k = 0; k < omega.size(); ++k) omega(k) = 0.4 * norm(rng);
    const GlobalParams gp(Vector::Zero(1), omega);
    const double nu = r + 2.5;
    const double oracle = 0.5 * (nu - r - 1) * gp.log_det_precision() -
                          0.5 * (scale.inverse() * gp.precision()).trace() +
                          log_jacobian(omega, r);
    CHECK(log_p_omega(gp, pr) == doctest::Approx(oracle).epsilon(1e-7));
  }
}

TEST_CASE("prior and subject omega gradients match finite differences") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> norm;
  for (int r = 1; r <= 3; ++r) {
    Vector omega(matcalc::half_size(r));
    for (Eigen::Index k = 0; k < omega.size(); ++k) omega(k) = 0.5 * norm(rng);
    Vector b(r);
    for (int k = 0; k < r; ++k) b(k) = norm(rng);
    const Priors wish = Priors::wishart(r + 1.0, Matrix::Identity(r, r) * 0.7);
    const Priors normal = Priors::normal_omega(r, 10.0);
    const GlobalParams gp(Vector::Zero(1), omega);
    for (const Priors* pr : {&wish, &normal}) {
      auto f = [&](const Vector& w) { return log_p_omega(GlobalParams(Vector::Zero(1), w), *pr); };
      CHECK(testing::max_rel_error(prior_grad_omega(gp, *pr), fd(f, omega)) < 1e-7);
    }
    auto sub = [&](const Vector& w) {
      const GlobalParams g(Vector::Zero(1), w);
      return 0.5 * g.log_det_precision() - 0.5 * b.dot(g.precision() * b);
    };
    CHECK(testing::max_rel_error(subject_grad_omega(gp, b), fd(sub, omega)) < 1e-7);
  }
}

TEST_CASE("pooled GLM matches an independent IRLS reference") {
  const Dataset d = small_poisson();
  const PooledGlmFit fit = fit_pooled_glm(d);
  CHECK(fit.beta(0) == doctest::Approx(-0.07708885).epsilon(1e-6));
  CHECK(fit.beta(1) == doctest::Approx(1.17676932).epsilon(1e-6));
}

TEST_CASE("default prior from the pooled fit") {
  const Priors pr = default_prior(small_poisson());
  REQUIRE(pr.is_wishart());
  // Fitted means sum to the response total 20 across 2 subjects.
  CHECK(pr.wishart_prior().nu == 1.0);
  CHECK(pr.wishart_prior().scale(0, 0) == doctest::Approx(10.0).epsilon(1e-8));
}

TEST_CASE("rank-deficient fixed-effect design is rejected") {
  Subject s;
  s.y = Vector::Ones(4);
  s.x = Matrix::Ones(4, 2);
  s.z = Matrix::Ones(4, 1);
  const Dataset d(FamilyKind::Poisson, 2, 1, {s});
  CHECK_THROWS_AS(fit_pooled_glm(d), RankDeficient);
}

TEST_CASE("log joint adds subject terms and priors") {
  std::mt19937_64 rng(8);
  const auto cfg = testing::random_config(FamilyKind::Poisson, 3, 2, 2, rng);
  std::vector<Vector> b(3, Vector::Zero(2));
  double want = log_p_beta(cfg.gp, cfg.priors) + log_p_omega(cfg.gp, cfg.priors);
  for (int i = 0; i < 3; ++i) {
    const Subject& s = cfg.data.subject(i);
    const Vector eta = s.x * cfg.gp.beta();
    for (Eigen::Index j = 0; j < eta.size(); ++j) want += s.y(j) * eta(j) - std::exp(eta(j));
    want += 0.5 * cfg.gp.log_det_precision();
  }
  CHECK(log_joint(cfg.data, cfg.gp, b, cfg.priors) == doctest::Approx(want));
}
