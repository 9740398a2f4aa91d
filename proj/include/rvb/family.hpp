#pragma once

// One-parameter exponential families with canonical links. The log partition
// h(eta) and its first three derivatives drive every likelihood, Taylor
// expansion and implicit-differentiation term in the engine.

#include <optional>
#include <string>
#include <string_view>

namespace rvb {

enum class FamilyKind {
  Poisson,
  Binomial,
  Bernoulli,
  // y ~ N(eta, 1). Not a count family; used to make the linear-mixed-model
  // closed form available as an exact reference.
  GaussianUnit,
};

std::string_view family_name(FamilyKind kind);
// Accepts "poisson", "binomial", "bernoulli" and "gaussian-unit".
FamilyKind parse_family(std::string_view name);

struct LogPartition {
  double h = 0.0;
  double h1 = 0.0;
  double h2 = 0.0;
  double h3 = 0.0;
};

// `trials` is only read for Binomial (Bernoulli forces 1).
LogPartition log_partition(FamilyKind kind, double trials, double eta);

// Throws InvalidResponse when y is outside the family's support.
void validate_observation(FamilyKind kind, double y, double trials);

// Mode of p(y | eta); empty on the support boundary.
std::optional<double> eta_hat_ml(FamilyKind kind, double y, double trials);

// Posterior mean of eta under the Jeffreys prior on the mean. Finite everywhere.
double eta_hat_reg(FamilyKind kind, double y, double trials);

// y * eta - h(eta); parameter-free constants are dropped.
double loglik(FamilyKind kind, double y, double trials, double eta);

double digamma(double x);

// Overflow-safe logistic function and log(1 + e^x).
double logistic(double x);
double softplus(double x);

}  // namespace rvb
