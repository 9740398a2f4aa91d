#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "rvb/error.hpp"
#include "rvb/reparam.hpp"
#include "synthetic.hpp"

using namespace rvb;

namespace {

Dataset one_subject(FamilyKind f, Vector y, Matrix z, double trials = 1.0) {
  Subject s;
  const auto n = y.size();
  s.y = std::move(y);
  s.trials = Vector::Constant(n, trials);
  s.x = Matrix::Ones(n, 1);
  s.z = std::move(z);
  return Dataset(f, 1, static_cast<int>(s.z.cols()), {s});
}

GlobalParams scalar_gp(double beta, double precision) {
  return GlobalParams(Vector::Constant(1, beta), Vector::Constant(1, 0.5 * std::log(precision)));
}

double bisect(const std::function<double(double)>& f, double lo, double hi) {
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if ((f(lo) < 0) == (f(mid) < 0)) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("approach 1 on the unit-variance gaussian is the conjugate update") {
  const Dataset d = one_subject(FamilyKind::GaussianUnit, Vector((Vector(2) << 1, 3).finished()),
                                Matrix::Ones(2, 1));
  const auto t = transform_a1(d, 0, scalar_gp(0.0, 1.0));
  CHECK(t.cov(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(t.lambda(0) == doctest::Approx(4.0 / 3.0));
  CHECK(t.chol(0, 0) == doctest::Approx(std::sqrt(1.0 / 3.0)));
}

TEST_CASE("approach 1 poisson zero count") {
  const Dataset d = one_subject(FamilyKind::Poisson, Vector::Zero(1), Matrix::Ones(1, 1));
  const auto t = transform_a1(d, 0, scalar_gp(0.0, 1.0));
  const double eh = digamma(0.5);
  const double h2 = std::exp(eh);
  const double cov = 1.0 / (1.0 + h2);
  CHECK(t.cov(0, 0) == doctest::Approx(cov));
  CHECK(t.cov(0, 0) == doctest::Approx(0.8769).epsilon(1e-3));
  CHECK(t.lambda(0) == doctest::Approx(cov * (-h2 + h2 * eh)));
  CHECK(t.lambda(0) == doctest::Approx(-0.365).epsilon(2e-3));
}

TEST_CASE("approach 1 tends to the prior as eta-hat goes to minus infinity") {
  const Dataset d = one_subject(FamilyKind::Poisson, Vector::Zero(3),
                                Matrix((Matrix(3, 2) << 1, 0.2, 1, -0.4, 1, 1.1).finished()));
  Vector omega(3);
  omega << 0.2, -0.3, 0.1;
  const GlobalParams gp(Vector::Constant(1, 0.3), omega);
  const auto t = transform_a1(d, 0, gp, Vector::Constant(3, -30.0));
  CHECK(t.lambda.norm() < 1e-10);
  CHECK((t.cov - gp.precision().inverse()).norm() < 1e-10);
}

TEST_CASE("approach 2 finds the conditional mode") {
  SUBCASE("stationary at zero") {
    const Dataset d = one_subject(FamilyKind::Poisson, Vector::Ones(1), Matrix::Ones(1, 1));
    const auto t = transform_a2(d, 0, scalar_gp(0.0, 1.0));
    CHECK(std::abs(t.lambda(0)) < 1e-12);
    CHECK(t.cov(0, 0) == doctest::Approx(0.5));
  }
  SUBCASE("zero count") {
    const Dataset d = one_subject(FamilyKind::Poisson, Vector::Zero(1), Matrix::Ones(1, 1));
    const auto t = transform_a2(d, 0, scalar_gp(0.0, 1.0));
    const double root = bisect([](double b) { return -std::exp(b) - b; }, -2.0, 0.0);
    CHECK(t.lambda(0) == doctest::Approx(root).epsilon(1e-12));
    CHECK(t.lambda(0) == doctest::Approx(-0.56714).epsilon(1e-5));
    CHECK(t.cov(0, 0) == doctest::Approx(1.0 / (std::exp(root) + 1.0)));
    CHECK(t.mode_eta(0) == doctest::Approx(root));
  }
}

TEST_CASE("both approaches coincide with the closed form for unit-variance gaussian") {
  std::mt19937_64 rng(17);
  for (int r = 1; r <= 3; ++r) {
    const auto cfg = testing::random_config(FamilyKind::GaussianUnit, 5, 2, r, rng);
    for (int i = 0; i < cfg.data.n(); ++i) {
      const Subject& s = cfg.data.subject(i);
      const Matrix cov = (cfg.gp.precision() + s.z.transpose() * s.z).inverse();
      const Vector mean = cov * s.z.transpose() * (s.y - s.x * cfg.gp.beta());
      const auto t1 = transform_a1(cfg.data, i, cfg.gp);
      const auto t2 = transform_a2(cfg.data, i, cfg.gp);
      CHECK((t1.cov - cov).norm() < 1e-10);
      CHECK((t2.cov - cov).norm() < 1e-10);
      CHECK((t1.lambda - mean).norm() < 1e-10);
      CHECK((t2.lambda - mean).norm() < 1e-10);
    }
  }
}

TEST_CASE("transforms are positive definite across random configurations") {
  std::mt19937_64 rng(23);
  for (FamilyKind f : {FamilyKind::Poisson, FamilyKind::Binomial, FamilyKind::Bernoulli}) {
    for (int rep = 0; rep < 60; ++rep) {
      const int r = 1 + rep % 3;
      const auto cfg = testing::random_config(f, 4, 2, r, rng);
      for (auto method : {TransformMethod::Approach1, TransformMethod::Approach2}) {
        for (const auto& t : build_transforms(cfg.data, cfg.gp, method)) {
          CHECK(t.chol.diagonal().minCoeff() > 0.0);
          CHECK((t.chol * t.chol.transpose() - t.cov).norm() < 1e-10);
          CHECK(t.lambda.allFinite());
        }
      }
    }
  }
}

TEST_CASE("newton start") {
  const Dataset d = one_subject(FamilyKind::GaussianUnit, Vector((Vector(2) << 1, 3).finished()),
                                Matrix::Ones(2, 1));
  CHECK(nr_init(d, 0, scalar_gp(0.0, 1.0))(0) == doctest::Approx(2.0));
  const Dataset short_subject =
      one_subject(FamilyKind::Poisson, Vector::Ones(1), Matrix((Matrix(1, 2) << 1, 2).finished()));
  const GlobalParams gp(Vector::Zero(1), Vector::Zero(3));
  CHECK(nr_init(short_subject, 0, gp).isZero());
}

TEST_CASE("apply and invert are inverse") {
  LocalTransform t;
  t.lambda = Vector::Constant(1, 2.0);
  t.chol = Matrix::Constant(1, 1, 3.0);
  CHECK(apply(t, Vector::Constant(1, 5.0))(0) == doctest::Approx(1.0));
  std::mt19937_64 rng(1);
  const auto cfg = testing::random_config(FamilyKind::Poisson, 1, 1, 3, rng);
  const auto tr = transform_a2(cfg.data, 0, cfg.gp);
  const Vector b = Vector::LinSpaced(3, -1.0, 2.0);
  CHECK((invert(tr, apply(tr, b)) - b).norm() < 1e-12);
}

TEST_CASE("method names") {
  CHECK(parse_method("a2") == TransformMethod::Approach2);
  CHECK(method_name(TransformMethod::Approach1) == "a1");
  CHECK_THROWS_AS(parse_method("laplace"), ConfigError);
}

TEST_CASE("cached approach 1 terms match the explicit expansion") {
  std::mt19937_64 rng(31);
  for (FamilyKind f : {FamilyKind::Poisson, FamilyKind::Binomial, FamilyKind::Bernoulli}) {
    for (int r = 1; r <= 3; ++r) {
      const auto cfg = testing::random_config(f, 3, 2, r, rng);
      for (int i = 0; i < cfg.data.n(); ++i) {
        const auto fast = transform_a1(cfg.data, i, cfg.gp);
        const auto slow = transform_a1(cfg.data, i, cfg.gp, cfg.data.eta_hat(i));
        CHECK((fast.lambda - slow.lambda).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((fast.cov - slow.cov).cwiseAbs().maxCoeff() < 1e-12);
      }
    }
  }
}
