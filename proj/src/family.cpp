#include "rvb/family.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <string>

#include "rvb/error.hpp"

namespace rvb {
namespace {

constexpr double kPoissonEtaLimit = 500.0;

double effective_trials(FamilyKind kind, double trials) {
  return kind == FamilyKind::Bernoulli ? 1.0 : trials;
}

bool is_integer(double v) { return std::floor(v) == v; }

}  // namespace

std::string_view family_name(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::Poisson:
      return "poisson";
    case FamilyKind::Binomial:
      return "binomial";
    case FamilyKind::Bernoulli:
      return "bernoulli";
    case FamilyKind::GaussianUnit:
      return "gaussian-unit";
  }
  return "unknown";
}

FamilyKind parse_family(std::string_view name) {
  if (name == "poisson") return FamilyKind::Poisson;
  if (name == "binomial") return FamilyKind::Binomial;
  if (name == "bernoulli") return FamilyKind::Bernoulli;
  if (name == "gaussian-unit") return FamilyKind::GaussianUnit;
  throw ConfigError("unknown family '" + std::string(name) + "'");
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

LogPartition log_partition(FamilyKind kind, double trials, double eta) {
  switch (kind) {
    case FamilyKind::Poisson: {
      if (eta > kPoissonEtaLimit) {
        throw OverflowGuard("Poisson natural parameter " + std::to_string(eta) +
                            " exceeds the overflow guard");
      }
      const double e = std::exp(eta);
      return {e, e, e, e};
    }
    case FamilyKind::Binomial:
    case FamilyKind::Bernoulli: {
      // One exponential serves p, q and log(1 + e^eta).
      const double m = effective_trials(kind, trials);
      const double e = std::exp(-std::abs(eta));
      const double small = e / (1.0 + e);
      const double large = 1.0 / (1.0 + e);
      const double p = eta >= 0.0 ? large : small;
      const double q = eta >= 0.0 ? small : large;
      const double sp = std::max(eta, 0.0) + std::log1p(e);
      return {m * sp, m * p, m * p * q, m * p * q * (q - p)};
    }
    case FamilyKind::GaussianUnit:
      return {0.5 * eta * eta, eta, 1.0, 0.0};
  }
  return {};
}

void validate_observation(FamilyKind kind, double y, double trials) {
  if (!std::isfinite(y)) throw InvalidResponse("non-finite response");
  switch (kind) {
    case FamilyKind::Poisson:
      if (y < 0.0 || !is_integer(y)) {
        throw InvalidResponse("poisson response must be a nonnegative integer, got " +
                              std::to_string(y));
      }
      return;
    case FamilyKind::Bernoulli:
      if (y != 0.0 && y != 1.0) {
        throw InvalidResponse("bernoulli response must be 0 or 1, got " + std::to_string(y));
      }
      return;
    case FamilyKind::Binomial:
      if (!(trials >= 1.0) || !is_integer(trials)) {
        throw InvalidResponse("binomial trials must be a positive integer, got " +
                              std::to_string(trials));
      }
      if (y < 0.0 || y > trials || !is_integer(y)) {
        throw InvalidResponse("binomial response must be an integer in [0, trials], got " +
                              std::to_string(y));
      }
      return;
    case FamilyKind::GaussianUnit:
      return;
  }
}

std::optional<double> eta_hat_ml(FamilyKind kind, double y, double trials) {
  switch (kind) {
    case FamilyKind::Poisson:
      if (y > 0.0) return std::log(y);
      return std::nullopt;
    case FamilyKind::Binomial:
    case FamilyKind::Bernoulli: {
      const double m = effective_trials(kind, trials);
      if (y > 0.0 && y < m) return std::log(y / (m - y));
      return std::nullopt;
    }
    case FamilyKind::GaussianUnit:
      return y;
  }
  return std::nullopt;
}

double eta_hat_reg(FamilyKind kind, double y, double trials) {
  switch (kind) {
    case FamilyKind::Poisson:
      return digamma(y + 0.5);
    case FamilyKind::Binomial:
    case FamilyKind::Bernoulli: {
      const double m = effective_trials(kind, trials);
      return digamma(y + 0.5) - digamma(m - y + 0.5);
    }
    case FamilyKind::GaussianUnit:
      return y;
  }
  return 0.0;
}

double loglik(FamilyKind kind, double y, double trials, double eta) {
  return y * eta - log_partition(kind, trials, eta).h;
}

double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError("digamma requires a positive finite argument");
  }
  return boost::math::digamma(x);
}

}  // namespace rvb
