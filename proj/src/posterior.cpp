#include "rvb/posterior.hpp"

#include <cmath>

#include "rvb/error.hpp"

namespace rvb {
namespace {

constexpr int kMaxRejectStreak = 1000;

struct Accumulator {
  Vector sum;
  Vector sum_sq;
  long count = 0;

  explicit Accumulator(Eigen::Index size) : sum(Vector::Zero(size)), sum_sq(Vector::Zero(size)) {}
  void add(const Vector& v) {
    sum += v;
    sum_sq += v.cwiseAbs2();
    ++count;
  }
  Moments moments() const {
    Moments m;
    m.mean = sum / static_cast<double>(count);
    const double denom = count > 1 ? static_cast<double>(count - 1) : 1.0;
    m.sd = ((sum_sq - static_cast<double>(count) * m.mean.cwiseAbs2()) / denom)
               .cwiseMax(0.0)
               .cwiseSqrt();
    return m;
  }
};

}  // namespace

std::vector<std::string> scale_names(int r) {
  if (r == 1) return {"sigma"};
  std::vector<std::string> names;
  for (int k = 1; k <= r; ++k) names.push_back("sigma" + std::to_string(k));
  for (int c = 1; c <= r; ++c)
    for (int k = c + 1; k <= r; ++k) names.push_back("rho" + std::to_string(k) + std::to_string(c));
  return names;
}

Vector scale_params(const GlobalParams& gp) {
  const int r = gp.r();
  // Omega^{-1} = W^{-T} W^{-1}
  const Matrix cov = gp.w_inv_t() * gp.w_inv_t().transpose();
  Vector out(r + r * (r - 1) / 2);
  for (int k = 0; k < r; ++k) out(k) = std::sqrt(cov(k, k));
  int pos = r;
  for (int c = 0; c < r; ++c)
    for (int k = c + 1; k < r; ++k) out(pos++) = cov(k, c) / (out(k) * out(c));
  return out;
}

Matrix covariance_from_scales(const Vector& scales, int r) {
  if (scales.size() != r + r * (r - 1) / 2) throw LengthMismatch("scale vector length");
  Matrix cov(r, r);
  for (int k = 0; k < r; ++k) cov(k, k) = scales(k) * scales(k);
  int pos = r;
  for (int c = 0; c < r; ++c)
    for (int k = c + 1; k < r; ++k) {
      cov(k, c) = cov(c, k) = scales(pos++) * scales(k) * scales(c);
    }
  return cov;
}

int simulate_b(const Dataset& data, const Priors& pr, const FitResult& fit, int draws,
               std::uint64_t seed, const std::function<void(const PosteriorDraw&)>& visit) {
  if (draws < 1) throw ConfigError("at least one posterior draw is required");
  const Objective obj(data, pr, fit.method, fit.fixed_omega);
  const VariationalState& st = fit.state;
  const int n = data.n();
  const int r = data.r();
  int rejected = 0;
  int streak = 0;
  std::vector<Vector> b(static_cast<std::size_t>(n));
  for (long k = 0, attempt = 0; k < draws; ++attempt) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(attempt), 0x5157u);
    const Vector theta = st.transform(draw_standard_normal(st.dim(), rng));
    try {
      const GlobalParams gp = obj.global_params(theta);
      for (int i = 0; i < n; ++i) {
        const LocalTransform t = build_transform(data, i, gp, fit.method);
        b[static_cast<std::size_t>(i)] = invert(t, theta.segment(i * r, r));
      }
      visit(PosteriorDraw{&gp, &b});
      ++k;
      streak = 0;
    } catch (const NumericalError&) {
      ++rejected;
      if (++streak > kMaxRejectStreak) throw DivergedError("posterior simulation keeps failing");
    }
  }
  return rejected;
}

Moments scale_moments(const Vector& mean, const Matrix& cov, int p, int r, int draws,
                      std::uint64_t seed) {
  const Matrix l = matcalc::cholesky(cov);
  Accumulator acc(r + r * (r - 1) / 2);
  for (int k = 0; k < draws; ++k) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(k), 0x5CA1u);
    const Vector theta = mean + l * draw_standard_normal(static_cast<int>(mean.size()), rng);
    acc.add(scale_params(GlobalParams(theta.head(p), theta.tail(theta.size() - p))));
  }
  return acc.moments();
}

PosteriorSummary summarise(const Dataset& data, const Priors& pr, const FitResult& fit,
                           int draws, std::uint64_t seed) {
  const VariationalState& st = fit.state;
  const int n = data.n();
  const int r = data.r();
  PosteriorSummary out;
  const Vector sd = st.marginal_sd();
  out.global.mean = st.mu().tail(st.g());
  out.global.sd = sd.tail(st.g());
  out.subjects.bt_mean.resize(n, r);
  out.subjects.bt_sd.resize(n, r);
  for (int i = 0; i < n; ++i) {
    out.subjects.bt_mean.row(i) = st.mu().segment(i * r, r).transpose();
    out.subjects.bt_sd.row(i) = sd.segment(i * r, r).transpose();
  }

  Accumulator scales(r + r * (r - 1) / 2);
  Accumulator bs(static_cast<Eigen::Index>(n) * r);
  Vector flat(static_cast<Eigen::Index>(n) * r);
  out.rejected = simulate_b(data, pr, fit, draws, seed, [&](const PosteriorDraw& d) {
    scales.add(scale_params(*d.gp));
    for (int i = 0; i < n; ++i) flat.segment(i * r, r) = (*d.b)[static_cast<std::size_t>(i)];
    bs.add(flat);
  });
  out.draws = draws;
  out.rejection_warning = out.rejected > 0.01 * draws;
  out.scales = scales.moments();
  const Moments bm = bs.moments();
  out.subjects.b_mean = Eigen::Map<const Matrix>(bm.mean.data(), r, n).transpose();
  out.subjects.b_sd = Eigen::Map<const Matrix>(bm.sd.data(), r, n).transpose();
  return out;
}

Comparison compare_metrics(const Matrix& va_means, const Matrix& va_sds, const Matrix& ref_means,
                           const Matrix& ref_sds) {
  if (va_means.rows() != ref_means.rows() || va_means.cols() != ref_means.cols() ||
      va_sds.rows() != va_means.rows() || va_sds.cols() != va_means.cols() ||
      ref_sds.rows() != va_means.rows() || ref_sds.cols() != va_means.cols()) {
    throw LengthMismatch("compare_metrics: shapes differ");
  }
  if ((va_sds.array() <= 0.0).any()) throw ZeroSd("variational standard deviation is zero");
  Comparison c;
  c.r1 = (va_means - ref_means).cwiseQuotient(va_sds);
  c.r2 = ref_sds.cwiseQuotient(va_sds);
  return c;
}

}  // namespace rvb
