#pragma once

// Per-subject affine transforms b~ = L^{-1}(b - lambda). Approach 1 expands
// the log likelihood about the regularised eta-hat; approach 2 centres on the
// conditional mode found by damped Newton-Raphson.

#include "rvb/model.hpp"

namespace rvb {

enum class TransformMethod { Approach1, Approach2 };

std::string_view method_name(TransformMethod m);
// "a1" or "a2"
TransformMethod parse_method(std::string_view name);

LocalTransform transform_a1(const Dataset& data, int i, const GlobalParams& gp);
// Same expansion about caller-supplied natural-parameter estimates.
LocalTransform transform_a1(const Dataset& data, int i, const GlobalParams& gp,
                            const Vector& eta_hat);
LocalTransform transform_a2(const Dataset& data, int i, const GlobalParams& gp);
LocalTransform build_transform(const Dataset& data, int i, const GlobalParams& gp,
                               TransformMethod method);
std::vector<LocalTransform> build_transforms(const Dataset& data, const GlobalParams& gp,
                                             TransformMethod method);

// Least-squares start for the mode search: (Z'Z)^{-1} Z'(eta_hat - X beta), or
// zero when the subject has fewer observations than random effects.
Vector nr_init(const Dataset& data, int i, const GlobalParams& gp);

// Objective maximised by the mode search: sum loglik - b' Omega b / 2.
double conditional_log_density(const Dataset& data, int i, const GlobalParams& gp,
                               const Vector& b);

Vector apply(const LocalTransform& t, const Vector& b);
Vector invert(const LocalTransform& t, const Vector& b_tilde);

}  // namespace rvb
