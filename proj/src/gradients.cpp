#include "rvb/gradients.hpp"

#include "rvb/error.hpp"

namespace rvb {
namespace {

struct SubjectPass {
  Vector b;
  Vector resid;  // y - g(eta)
  Vector a;
  double loglik = 0.0;
};

SubjectPass subject_pass(const Dataset& data, int i, const GlobalParams& gp,
                         const LocalTransform& t, const Vector& b_tilde) {
  const Subject& s = data.subject(i);
  SubjectPass p;
  p.b = invert(t, b_tilde);
  const Vector eta = s.x * gp.beta() + s.z * p.b;
  p.resid.resize(eta.size());
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    const LogPartition lp = log_partition(data.family(), s.trials(j), eta(j));
    p.resid(j) = s.y(j) - lp.h1;
    p.loglik += s.y(j) * eta(j) - lp.h;
  }
  p.a = s.z.transpose() * p.resid - gp.precision() * p.b;
  return p;
}

// Contributions of one subject to the beta gradient and to the matrix T whose
// product with W enters the omega gradient.
struct GlobalTerms {
  Vector beta;
  Matrix t;
};

GlobalTerms terms_a1(const Dataset& data, int i, const LocalTransform& t, const SubjectPass& p,
                     const Vector& b_tilde) {
  const Subject& s = data.subject(i);
  const Vector lam_a = t.cov * p.a;
  const Matrix m = t.chol * btilde_mat(t, p.a, b_tilde) * t.chol.transpose();
  GlobalTerms g;
  // X'(y - g(eta)) - X' H(eta_hat) Z Lambda a
  g.beta = s.x.transpose() * p.resid - data.expansion(i).zhx.transpose() * lam_a;
  g.t = p.b * p.b.transpose() + lam_a * t.lambda.transpose() +
        t.lambda * lam_a.transpose() + t.cov + m;
  return g;
}

GlobalTerms terms_a2(const Dataset& data, int i, const LocalTransform& t, const SubjectPass& p,
                     const Vector& b_tilde) {
  const Subject& s = data.subject(i);
  const Matrix m = t.chol * btilde_mat(t, p.a, b_tilde) * t.chol.transpose();
  const Matrix inner = t.cov + m;
  const auto ni = s.y.size();
  Vector alpha(ni);
  Vector h2(ni);
  for (Eigen::Index j = 0; j < ni; ++j) {
    const LogPartition lp = log_partition(data.family(), s.trials(j), t.mode_eta(j));
    const auto zj = s.z.row(j);
    alpha(j) = 0.5 * lp.h3 * zj.dot(inner * zj.transpose());
    h2(j) = lp.h2;
  }
  const Vector a_adj = p.a - s.z.transpose() * alpha;
  const Vector lam_a = t.cov * a_adj;
  const Vector z_lam_a = s.z * lam_a;
  GlobalTerms g;
  g.beta = s.x.transpose() * (p.resid - h2.cwiseProduct(z_lam_a) - alpha);
  g.t = p.b * p.b.transpose() + lam_a * t.lambda.transpose() +
        t.lambda * lam_a.transpose() + t.cov + m;
  return g;
}

void check_sizes(const Dataset& data, std::span<const LocalTransform> transforms,
                 std::span<const Vector> b_tilde) {
  if (static_cast<int>(b_tilde.size()) != data.n() ||
      static_cast<int>(transforms.size()) != data.n()) {
    throw LengthMismatch("one transform and one b~ block per subject required");
  }
}

// Shared driver; fills value, local blocks and global blocks.
Evaluation run(const Dataset& data, const GlobalParams& gp,
               std::span<const LocalTransform> transforms, std::span<const Vector> b_tilde,
               TransformMethod method, const Priors& pr) {
  check_sizes(data, transforms, b_tilde);
  Evaluation ev;
  ev.grad.local.resize(b_tilde.size());
  Vector beta_sum = Vector::Zero(gp.p());
  Matrix omega_sum = Matrix::Zero(gp.r(), gp.r());
  double value = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    const LocalTransform& t = transforms[k];
    const SubjectPass p = subject_pass(data, i, gp, t, b_tilde[k]);
    value += p.loglik - 0.5 * p.b.dot(gp.precision() * p.b) +
             t.chol.diagonal().array().log().sum();
    ev.grad.local[k] = grad_local(t, p.a);
    const GlobalTerms g = method == TransformMethod::Approach1
                              ? terms_a1(data, i, t, p, b_tilde[k])
                              : terms_a2(data, i, t, p, b_tilde[k]);
    beta_sum += g.beta;
    omega_sum += g.t;
  }
  const double n = data.n();
  value += 0.5 * n * gp.log_det_precision() + log_p_beta(gp, pr) + log_p_omega(gp, pr);
  ev.value = value;
  ev.grad.beta = beta_sum - gp.beta() / pr.sigma_beta2;
  const Matrix raw = n * gp.w_inv_t() - omega_sum * gp.w();
  ev.grad.omega = matcalc::dweight(gp.w()).cwiseProduct(matcalc::halfvec(raw)) +
                  prior_grad_omega(gp, pr);
  return ev;
}

}  // namespace

Vector JointGradient::flatten() const {
  Eigen::Index total = beta.size() + omega.size();
  for (const auto& l : local) total += l.size();
  Vector out(total);
  Eigen::Index pos = 0;
  for (const auto& l : local) {
    out.segment(pos, l.size()) = l;
    pos += l.size();
  }
  out.segment(pos, beta.size()) = beta;
  pos += beta.size();
  out.segment(pos, omega.size()) = omega;
  return out;
}

Vector a_vec(const Dataset& data, int i, const GlobalParams& gp, const Vector& b) {
  const Subject& s = data.subject(i);
  const Vector eta = s.x * gp.beta() + s.z * b;
  Vector resid(eta.size());
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    resid(j) = s.y(j) - log_partition(data.family(), s.trials(j), eta(j)).h1;
  }
  return s.z.transpose() * resid - gp.precision() * b;
}

Vector grad_local(const LocalTransform& t, const Vector& a) { return t.chol.transpose() * a; }

Matrix btilde_mat(const LocalTransform& t, const Vector& a, const Vector& b_tilde) {
  const Matrix b = (t.chol.transpose() * a) * b_tilde.transpose();
  const Matrix lower = matcalc::tri_lower(b);
  return lower + lower.transpose() - matcalc::dg(b);
}

std::pair<Vector, Vector> grad_global_a1(const Dataset& data, const GlobalParams& gp,
                                         std::span<const LocalTransform> transforms,
                                         std::span<const Vector> b_tilde, const Priors& pr) {
  Evaluation ev = run(data, gp, transforms, b_tilde, TransformMethod::Approach1, pr);
  return {std::move(ev.grad.beta), std::move(ev.grad.omega)};
}

std::pair<Vector, Vector> grad_global_a2(const Dataset& data, const GlobalParams& gp,
                                         std::span<const LocalTransform> transforms,
                                         std::span<const Vector> b_tilde, const Priors& pr) {
  Evaluation ev = run(data, gp, transforms, b_tilde, TransformMethod::Approach2, pr);
  return {std::move(ev.grad.beta), std::move(ev.grad.omega)};
}

JointGradient grad_full(const Dataset& data, const GlobalParams& gp,
                        std::span<const Vector> b_tilde, TransformMethod method,
                        const Priors& pr) {
  return evaluate(data, gp, b_tilde, method, pr).grad;
}

Evaluation evaluate(const Dataset& data, const GlobalParams& gp,
                    std::span<const Vector> b_tilde, TransformMethod method, const Priors& pr) {
  const std::vector<LocalTransform> transforms = build_transforms(data, gp, method);
  return run(data, gp, transforms, b_tilde, method, pr);
}

}  // namespace rvb
