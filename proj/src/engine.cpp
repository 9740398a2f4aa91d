#include "rvb/engine.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "rvb/error.hpp"

namespace rvb {

using matcalc::half_size;

VariationalState::VariationalState(int n, int r, int g, double global_scale)
    : n_(n), r_(r), g_(g), mu_(Vector::Zero(n * r + g)) {
  blocks_.reserve(static_cast<std::size_t>(n + 1));
  for (int i = 0; i < n; ++i) blocks_.push_back(Matrix::Identity(r, r));
  blocks_.push_back(global_scale * Matrix::Identity(g, g));
}

void VariationalState::set_block(int k, Matrix c) {
  if (c.rows() != block_size(k) || c.cols() != block_size(k)) {
    throw LengthMismatch("variational block has the wrong order");
  }
  blocks_[static_cast<std::size_t>(k)] = std::move(c);
}

Vector VariationalState::transform(const Vector& s) const {
  Vector theta = mu_;
  for (int k = 0; k < block_count(); ++k) {
    const int off = block_offset(k);
    const int sz = block_size(k);
    theta.segment(off, sz) += block(k).triangularView<Eigen::Lower>() * s.segment(off, sz);
  }
  return theta;
}

Vector VariationalState::standardise(const Vector& theta) const {
  Vector s(theta.size());
  for (int k = 0; k < block_count(); ++k) {
    const int off = block_offset(k);
    const int sz = block_size(k);
    s.segment(off, sz) = matcalc::lower_solve(block(k), theta.segment(off, sz) - mu_.segment(off, sz));
  }
  return s;
}

Vector VariationalState::solve_transpose(const Vector& x) const {
  Vector out(x.size());
  for (int k = 0; k < block_count(); ++k) {
    const int off = block_offset(k);
    const int sz = block_size(k);
    out.segment(off, sz) = matcalc::lower_transpose_solve(block(k), x.segment(off, sz));
  }
  return out;
}

double VariationalState::log_det_c() const {
  double total = 0.0;
  for (const auto& c : blocks_) total += c.diagonal().array().log().sum();
  return total;
}

Vector VariationalState::marginal_sd() const {
  Vector sd(dim());
  for (int k = 0; k < block_count(); ++k) {
    sd.segment(block_offset(k), block_size(k)) = block(k).rowwise().norm();
  }
  return sd;
}

Matrix VariationalState::block_cov(int k) const { return block(k) * block(k).transpose(); }

int VariationalState::packed_size() const noexcept {
  return dim() + n_ * half_size(r_) + half_size(g_);
}

Vector VariationalState::pack() const {
  Vector x(packed_size());
  x.head(dim()) = mu_;
  int pos = dim();
  for (const auto& c : blocks_) {
    const Vector h = matcalc::pack_log_diag(c);
    x.segment(pos, h.size()) = h;
    pos += static_cast<int>(h.size());
  }
  return x;
}

void VariationalState::unpack(const Vector& x) {
  if (x.size() != packed_size()) throw LengthMismatch("packed variational vector length");
  mu_ = x.head(dim());
  int pos = dim();
  for (int k = 0; k < block_count(); ++k) {
    const int sz = block_size(k);
    blocks_[static_cast<std::size_t>(k)] = matcalc::unpack_log_diag(x.segment(pos, half_size(sz)), sz);
    pos += half_size(sz);
  }
}

void AdamState::update(Vector& x, const Vector& grad, const AdamConfig& cfg) {
  ++t;
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  x.array() += cfg.alpha * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t iteration, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(iteration),
                    static_cast<std::uint32_t>(iteration >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

Vector draw_standard_normal(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> norm;
  Vector s(d);
  for (int k = 0; k < d; ++k) s(k) = norm(rng);
  return s;
}

GradientEstimate estimate(const VariationalState& state, const Vector& s, const Vector& grad,
                          Estimator which) {
  GradientEstimate est;
  const Vector u = state.solve_transpose(s);  // C^{-T} s
  switch (which) {
    case Estimator::L1:
      est.mu = grad;
      break;
    case Estimator::L2:
      est.mu = grad + u;
      break;
    case Estimator::L3:
      est.mu = grad - u;
      break;
  }
  est.c.resize(state.n() * half_size(state.r()) + half_size(state.g()));
  int pos = 0;
  for (int k = 0; k < state.block_count(); ++k) {
    const int off = state.block_offset(k);
    const int sz = state.block_size(k);
    const auto sk = s.segment(off, sz);
    const auto gk = grad.segment(off, sz);
    const auto uk = u.segment(off, sz);
    const Matrix& c = state.block(k);
    Matrix m;
    switch (which) {
      case Estimator::L1:
        // lower triangle of C^{-T} is its diagonal
        m = gk * sk.transpose();
        m.diagonal() += c.diagonal().cwiseInverse();
        break;
      case Estimator::L2:
        m = (gk + uk) * sk.transpose();
        break;
      case Estimator::L3:
        m = (gk - uk) * sk.transpose();
        m.diagonal() += c.diagonal().cwiseInverse();
        break;
    }
    est.c.segment(pos, half_size(sz)) = matcalc::halfvec(m);
    pos += half_size(sz);
  }
  return est;
}

Vector packed_gradient(const VariationalState& state, const GradientEstimate& est) {
  Vector g(state.packed_size());
  g.head(state.dim()) = est.mu;
  int pos = 0;
  for (int k = 0; k < state.block_count(); ++k) {
    const int h = half_size(state.block_size(k));
    g.segment(state.dim() + pos, h) =
        matcalc::dweight(state.block(k)).cwiseProduct(est.c.segment(pos, h));
    pos += h;
  }
  return g;
}

double log_q(const VariationalState& state, const Vector& theta) {
  return -state.log_det_c() - 0.5 * state.standardise(theta).squaredNorm();
}

bool should_stop(const std::vector<double>& means, int tau) {
  const std::size_t k = std::min(means.size(), static_cast<std::size_t>(std::max(tau, 2)));
  if (k < 2) return false;
  const double* y = means.data() + (means.size() - k);
  const double xbar = 0.5 * static_cast<double>(k - 1);
  double ybar = 0.0;
  for (std::size_t i = 0; i < k; ++i) ybar += y[i];
  ybar /= static_cast<double>(k);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double dx = static_cast<double>(i) - xbar;
    sxy += dx * (y[i] - ybar);
    sxx += dx * dx;
  }
  return sxy / sxx < 0.0;
}

Objective::Objective(const Dataset& data, const Priors& pr, TransformMethod method,
                     std::optional<Vector> fixed_omega)
    : data_(&data), pr_(&pr), method_(method), fixed_omega_(std::move(fixed_omega)) {
  if (fixed_omega_ && fixed_omega_->size() != half_size(data.r())) {
    throw LengthMismatch("fixed omega has the wrong length");
  }
}

int Objective::global_dim() const noexcept {
  return data_->p() + (fixed_omega_ ? 0 : half_size(data_->r()));
}

GlobalParams Objective::global_params(const Vector& theta) const {
  const int base = data_->n() * data_->r();
  const int p = data_->p();
  Vector omega = fixed_omega_ ? *fixed_omega_ : Vector(theta.segment(base + p, half_size(data_->r())));
  return GlobalParams(theta.segment(base, p), std::move(omega));
}

std::pair<double, Vector> Objective::evaluate(const Vector& theta) const {
  const int n = data_->n();
  const int r = data_->r();
  std::vector<Vector> bt(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) bt[static_cast<std::size_t>(i)] = theta.segment(i * r, r);
  const GlobalParams gp = global_params(theta);
  Evaluation ev = rvb::evaluate(*data_, gp, bt, method_, *pr_);
  Vector g(dim());
  for (int i = 0; i < n; ++i) g.segment(i * r, r) = ev.grad.local[static_cast<std::size_t>(i)];
  g.segment(n * r, data_->p()) = ev.grad.beta;
  if (!fixed_omega_) g.tail(half_size(r)) = ev.grad.omega;
  if (!std::isfinite(ev.value) || !g.allFinite()) {
    throw DomainError("non-finite log joint or gradient");
  }
  return {ev.value, std::move(g)};
}

StepOutcome step(VariationalState& state, AdamState& adam, const Objective& obj,
                 const FitConfig& cfg, long iteration) {
  StepOutcome out;
  for (int attempt = 0;; ++attempt) {
    auto rng = make_rng(cfg.seed, static_cast<std::uint64_t>(iteration),
                        static_cast<std::uint64_t>(attempt));
    const Vector s = draw_standard_normal(state.dim(), rng);
    const Vector theta = state.transform(s);
    try {
      const auto [value, grad] = obj.evaluate(theta);
      out.elbo = value + state.log_det_c() + 0.5 * s.squaredNorm();
      const Vector g = packed_gradient(state, estimate(state, s, grad, cfg.estimator));
      Vector x = state.pack();
      adam.update(x, g, cfg.adam);
      state.unpack(x);
      out.retries = attempt;
      return out;
    } catch (const NumericalError& e) {
      if (attempt >= 1) {
        throw DivergedError("iteration " + std::to_string(iteration) +
                            " failed twice: " + e.what());
      }
    }
  }
}

std::pair<double, double> estimate_elbo(const VariationalState& state, const Objective& obj,
                                        int draws, std::uint64_t seed) {
  double sum = 0.0;
  double sum_sq = 0.0;
  int used = 0;
  for (int k = 0; k < draws; ++k) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(k), 0xE1B0u);
    const Vector s = draw_standard_normal(state.dim(), rng);
    try {
      const double v = obj.evaluate(state.transform(s)).first + state.log_det_c() +
                       0.5 * s.squaredNorm();
      sum += v;
      sum_sq += v * v;
      ++used;
    } catch (const NumericalError&) {
    }
  }
  if (used == 0) throw DivergedError("no finite ELBO sample at the final state");
  const double mean = sum / used;
  const double var = used > 1 ? std::max(0.0, (sum_sq - used * mean * mean) / (used - 1)) : 0.0;
  return {mean, std::sqrt(var / used)};
}

FitResult fit(const Dataset& data, const Priors& pr, const FitConfig& cfg) {
  if (cfg.max_iter < 1 || cfg.window < 1 || cfg.tau < 2 || cfg.elbo_draws < 1) {
    throw ConfigError("fit limits must be positive and tau at least 2");
  }
  const auto start = std::chrono::steady_clock::now();
  const Objective obj(data, pr, cfg.method, cfg.fixed_omega);
  FitResult res;
  res.method = cfg.method;
  res.fixed_omega = cfg.fixed_omega;
  res.state = VariationalState(data.n(), data.r(), obj.global_dim());
  AdamState adam(res.state.packed_size());

  double window_sum = 0.0;
  int in_window = 0;
  long it = 1;
  for (; it <= cfg.max_iter; ++it) {
    const StepOutcome o = step(res.state, adam, obj, cfg, it);
    res.retries += o.retries;
    window_sum += o.elbo;
    if (++in_window == cfg.window) {
      res.trace.push_back(window_sum / cfg.window);
      window_sum = 0.0;
      in_window = 0;
      if (should_stop(res.trace, cfg.tau)) {
        res.converged = true;
        break;
      }
    }
  }
  res.iterations = res.converged ? it : cfg.max_iter;
  const auto [elbo, se] = estimate_elbo(res.state, obj, cfg.elbo_draws, cfg.seed);
  res.elbo = elbo;
  res.elbo_se = se;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace rvb
