#include <cmath>
#include <random>

#include "doctest.h"
#include "rvb/engine.hpp"
#include "rvb/error.hpp"
#include "synthetic.hpp"

using namespace rvb;

namespace {

Matrix random_lower(int r, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Matrix c = Matrix::Zero(r, r);
  for (int j = 0; j < r; ++j) {
    c(j, j) = std::exp(0.3 * nd(rng));
    for (int i = j + 1; i < r; ++i) c(i, j) = 0.5 * nd(rng);
  }
  return c;
}

VariationalState random_state(int n, int r, int g, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  VariationalState st(n, r, g);
  for (int k = 0; k < st.block_count(); ++k) st.set_block(k, random_lower(st.block_size(k), rng));
  for (int k = 0; k < st.dim(); ++k) st.mu()(k) = nd(rng);
  return st;
}

Matrix dense_c(const VariationalState& st) {
  Matrix c = Matrix::Zero(st.dim(), st.dim());
  for (int k = 0; k < st.block_count(); ++k) {
    const int o = st.block_offset(k);
    const int m = st.block_size(k);
    c.block(o, o, m, m) = st.block(k);
  }
  return c;
}

}  // namespace

TEST_CASE("draws map through C and mu") {
  std::mt19937_64 rng(1);
  const VariationalState st = random_state(3, 2, 3, rng);
  CHECK((st.transform(Vector::Zero(st.dim())) - st.mu()).norm() == 0.0);

  VariationalState id(2, 2, 1, 1.0);
  const Vector s = (Vector(5) << 0.3, -1, 2, 0.5, -0.7).finished();
  CHECK((id.transform(s) - s).norm() == 0.0);

  const Vector x = draw_standard_normal(st.dim(), rng);
  CHECK((st.standardise(st.transform(x)) - x).norm() < 1e-12);
  CHECK((dense_c(st).transpose() * st.solve_transpose(x) - x).norm() < 1e-12);
}

TEST_CASE("pack and unpack round trip") {
  std::mt19937_64 rng(2);
  const VariationalState st = random_state(4, 2, 3, rng);
  VariationalState copy(4, 2, 3);
  copy.unpack(st.pack());
  CHECK(copy.pack().size() == st.packed_size());
  CHECK((copy.mu() - st.mu()).norm() == 0.0);
  for (int k = 0; k < st.block_count(); ++k)
    CHECK((copy.block(k) - st.block(k)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("log q against a dense gaussian density") {
  VariationalState st(1, 1, 1, 1.0);
  st.set_block(0, Matrix::Constant(1, 1, 2.0));
  CHECK(log_q(st, st.mu()) == doctest::Approx(-std::log(2.0)));
  CHECK(log_q(st, st.mu() + (Vector(2) << 2.0, 0.0).finished()) ==
        doctest::Approx(-std::log(2.0) - 0.5));
  VariationalState unit(2, 2, 2, 1.0);
  CHECK(log_q(unit, unit.mu()) == 0.0);

  std::mt19937_64 rng(3);
  const VariationalState rs = random_state(3, 2, 3, rng);
  const Matrix sigma = dense_c(rs) * dense_c(rs).transpose();
  Eigen::LLT<Matrix> llt(sigma);
  const Vector theta = rs.mu() + draw_standard_normal(rs.dim(), rng);
  const Vector dev = theta - rs.mu();
  const double quad = dev.dot(llt.solve(dev));
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  CHECK(log_q(rs, theta) == doctest::Approx(-0.5 * logdet - 0.5 * quad).epsilon(1e-12));
  CHECK(rs.log_det_c() == doctest::Approx(0.5 * logdet).epsilon(1e-12));
}

TEST_CASE("estimators at s = 0") {
  std::mt19937_64 rng(4);
  const VariationalState st = random_state(2, 2, 2, rng);
  const Vector grad = draw_standard_normal(st.dim(), rng);
  const Vector s = Vector::Zero(st.dim());

  const GradientEstimate l2 = estimate(st, s, grad, Estimator::L2);
  CHECK((l2.mu - grad).norm() == 0.0);
  CHECK(l2.c.norm() == 0.0);

  // v(C^{-T}) on the lower triangle keeps only the diagonal 1 / C_jj.
  const GradientEstimate l1 = estimate(st, s, grad, Estimator::L1);
  CHECK((l1.mu - grad).norm() == 0.0);
  int pos = 0;
  for (int k = 0; k < st.block_count(); ++k) {
    const Matrix& c = st.block(k);
    for (int j = 0; j < c.cols(); ++j)
      for (int i = j; i < c.rows(); ++i, ++pos)
        CHECK(l1.c(pos) == doctest::Approx(i == j ? 1.0 / c(i, i) : 0.0));
  }
  CHECK(pos == l1.c.size());
}

TEST_CASE("estimators differ by the score term") {
  std::mt19937_64 rng(5);
  const VariationalState st = random_state(3, 2, 2, rng);
  const Vector grad = draw_standard_normal(st.dim(), rng);
  const Vector s = draw_standard_normal(st.dim(), rng);
  const Vector u = st.solve_transpose(s);
  const GradientEstimate l1 = estimate(st, s, grad, Estimator::L1);
  const GradientEstimate l2 = estimate(st, s, grad, Estimator::L2);
  const GradientEstimate l3 = estimate(st, s, grad, Estimator::L3);
  CHECK((l2.mu - (grad + u)).norm() < 1e-12);
  CHECK((l3.mu - (grad - u)).norm() < 1e-12);
  CHECK((l1.mu - grad).norm() == 0.0);

  // L2 for v(C) is v{(g + u) s'} on each block.
  int pos = 0;
  for (int k = 0; k < st.block_count(); ++k) {
    const int o = st.block_offset(k);
    const int m = st.block_size(k);
    const Matrix outer = (grad + u).segment(o, m) * s.segment(o, m).transpose();
    for (int j = 0; j < m; ++j)
      for (int i = j; i < m; ++i, ++pos) CHECK(l2.c(pos) == doctest::Approx(outer(i, j)));
  }
}

TEST_CASE("adam leaves the parameters alone under a zero gradient") {
  AdamState adam(4);
  Vector x = (Vector(4) << 1, -2, 3, 0.5).finished();
  const Vector before = x;
  AdamConfig cfg;
  for (int k = 0; k < 5; ++k) adam.update(x, Vector::Zero(4), cfg);
  CHECK((x - before).norm() == 0.0);
  CHECK(adam.t == 5);
}

TEST_CASE("adam first step moves each coordinate by alpha") {
  AdamState adam(3);
  Vector x = Vector::Zero(3);
  AdamConfig cfg;
  adam.update(x, (Vector(3) << 4.0, -0.01, 100.0).finished(), cfg);
  CHECK(x(0) == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK(x(1) == doctest::Approx(-1e-3).epsilon(1e-4));
  CHECK(x(2) == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("stopping rule on window means") {
  CHECK_FALSE(should_stop({1, 2, 3, 4, 5}, 5));
  CHECK(should_stop({5, 5.1, 5.05, 5.06, 5.0}, 5));
  CHECK_FALSE(should_stop({3}, 5));
  // Only the last tau means count.
  CHECK_FALSE(should_stop({9, 0, 1, 2, 3, 4}, 5));
}

TEST_CASE("rng streams are reproducible and distinct") {
  auto a = make_rng(7, 3, 0);
  auto b = make_rng(7, 3, 0);
  auto c = make_rng(7, 3, 1);
  auto d = make_rng(7, 4, 0);
  const auto va = a();
  CHECK(va == b());
  CHECK(va != c());
  CHECK(va != d());
}

TEST_CASE("identical seeds give bit-identical fits") {
  std::mt19937_64 rng(8);
  const auto cfg = testing::random_config(FamilyKind::Poisson, 6, 2, 1, rng);
  FitConfig fc;
  fc.max_iter = 300;
  fc.window = 100;
  fc.elbo_draws = 50;
  for (auto m : {TransformMethod::Approach1, TransformMethod::Approach2}) {
    fc.method = m;
    const FitResult a = fit(cfg.data, cfg.priors, fc);
    const FitResult b = fit(cfg.data, cfg.priors, fc);
    CHECK(a.iterations == b.iterations);
    CHECK((a.state.pack() - b.state.pack()).norm() == 0.0);
    CHECK(a.elbo == b.elbo);
    CHECK(a.trace == b.trace);
    fc.seed = 2;
    const FitResult c = fit(cfg.data, cfg.priors, fc);
    CHECK((a.state.pack() - c.state.pack()).norm() > 0.0);
    fc.seed = 1;
  }
}

TEST_CASE("objective layout and fixed omega") {
  std::mt19937_64 rng(9);
  const auto cfg = testing::random_config(FamilyKind::Bernoulli, 3, 2, 2, rng);
  const Objective full(cfg.data, cfg.priors, TransformMethod::Approach2);
  CHECK(full.global_dim() == 2 + 3);
  CHECK(full.dim() == 3 * 2 + 5);
  const Vector theta = testing::pack_theta(cfg.b_tilde, cfg.gp);
  const auto [value, grad] = full.evaluate(theta);
  CHECK(value == doctest::Approx(testing::reparam_value(cfg.data, theta, TransformMethod::Approach2,
                                                        cfg.priors)));
  CHECK(grad.size() == full.dim());

  const Objective fixed(cfg.data, cfg.priors, TransformMethod::Approach2, cfg.gp.omega());
  CHECK(fixed.global_dim() == 2);
  const Vector short_theta = theta.head(fixed.dim());
  const auto [fv, fg] = fixed.evaluate(short_theta);
  CHECK(fv == doctest::Approx(value));
  CHECK((fg - grad.head(fixed.dim())).norm() < 1e-10);
}

TEST_CASE("fit records one trace mean per window and a finite ELBO") {
  std::mt19937_64 rng(10);
  const auto cfg = testing::random_config(FamilyKind::Binomial, 5, 2, 1, rng);
  FitConfig fc;
  fc.max_iter = 2000;
  fc.window = 200;
  fc.elbo_draws = 100;
  const FitResult res = fit(cfg.data, cfg.priors, fc);
  CHECK(res.iterations <= 2000);
  CHECK(res.trace.size() == static_cast<std::size_t>(res.iterations / 200));
  CHECK(std::isfinite(res.elbo));
  CHECK(res.elbo_se >= 0.0);
}
