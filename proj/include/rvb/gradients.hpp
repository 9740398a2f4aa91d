#pragma once

// Analytic gradient of the reparameterised log joint in
// theta~ = (b~_1, ..., b~_n, beta, omega). Transforms are rebuilt from the
// global parameters on every call because they are functions of them.

#include <span>
#include <utility>
#include <vector>

#include "rvb/reparam.hpp"

namespace rvb {

struct JointGradient {
  std::vector<Vector> local;  // one length-r block per subject
  Vector beta;
  Vector omega;

  // Concatenation in theta~ order.
  Vector flatten() const;
};

struct Evaluation {
  double value = 0.0;
  JointGradient grad;
};

// Z'(y - g(X beta + Z b)) - Omega b
Vector a_vec(const Dataset& data, int i, const GlobalParams& gp, const Vector& b);
// L' a
Vector grad_local(const LocalTransform& t, const Vector& a);
// bar(B) + bar(B)' - dg(B) with B = L' a b~'
Matrix btilde_mat(const LocalTransform& t, const Vector& a, const Vector& b_tilde);

std::pair<Vector, Vector> grad_global_a1(const Dataset& data, const GlobalParams& gp,
                                         std::span<const LocalTransform> transforms,
                                         std::span<const Vector> b_tilde, const Priors& pr);
std::pair<Vector, Vector> grad_global_a2(const Dataset& data, const GlobalParams& gp,
                                         std::span<const LocalTransform> transforms,
                                         std::span<const Vector> b_tilde, const Priors& pr);

JointGradient grad_full(const Dataset& data, const GlobalParams& gp,
                        std::span<const Vector> b_tilde, TransformMethod method,
                        const Priors& pr);

// Value of log_joint_reparam and its gradient from a single transform build.
Evaluation evaluate(const Dataset& data, const GlobalParams& gp,
                    std::span<const Vector> b_tilde, TransformMethod method, const Priors& pr);

}  // namespace rvb
