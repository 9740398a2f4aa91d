#include "rvb/simulate.hpp"

#include <random>

#include "rvb/engine.hpp"
#include "rvb/error.hpp"

namespace rvb {

std::vector<std::string> scenario_names() {
  return {"poisson-1", "poisson-2", "bernoulli-1", "bernoulli-2", "binomial-1", "binomial-2"};
}

Scenario named_scenario(std::string_view name) {
  Scenario sc;
  sc.name = std::string(name);
  if (name == "poisson-1" || name == "poisson-2") {
    sc.family = FamilyKind::Poisson;
    const bool one = name == "poisson-1";
    sc.beta0 = one ? -2.5 : 1.5;
    sc.beta1 = one ? -2.0 : 0.5;
    return sc;
  }
  if (name == "bernoulli-1" || name == "binomial-1") {
    sc.family = name == "bernoulli-1" ? FamilyKind::Bernoulli : FamilyKind::Binomial;
    sc.beta0 = -2.5;
    sc.beta1 = 4.5;
    sc.covariate = Covariate::Bernoulli;
  } else if (name == "bernoulli-2" || name == "binomial-2") {
    sc.family = name == "bernoulli-2" ? FamilyKind::Bernoulli : FamilyKind::Binomial;
    sc.beta0 = 0.0;
    sc.beta1 = 1.0;
  } else {
    throw ConfigError("unknown scenario '" + std::string(name) + "'");
  }
  if (sc.family == FamilyKind::Binomial) sc.trials = 20.0;
  return sc;
}

SimulatedData simulate_dataset(const Scenario& sc, std::uint64_t seed) {
  if (sc.n < 1 || sc.n_i < 1 || !(sc.sigma > 0.0)) throw ConfigError("invalid scenario sizes");
  auto rng = make_rng(seed, 0, 0x51Du);
  std::normal_distribution<double> norm(0.0, sc.sigma);
  std::bernoulli_distribution coin(0.5);
  std::vector<Subject> subjects;
  Vector b(sc.n);
  for (int i = 0; i < sc.n; ++i) {
    b(i) = norm(rng);
    Subject s;
    s.y.resize(sc.n_i);
    s.trials = Vector::Constant(sc.n_i, sc.trials);
    s.x.resize(sc.n_i, 2);
    s.z = Matrix::Ones(sc.n_i, 1);
    for (int j = 0; j < sc.n_i; ++j) {
      const double x = sc.covariate == Covariate::Visit ? (j + 1 - 4) / 10.0
                                                        : (coin(rng) ? 1.0 : 0.0);
      s.x(j, 0) = 1.0;
      s.x(j, 1) = x;
      const double eta = sc.beta0 + sc.beta1 * x + b(i);
      switch (sc.family) {
        case FamilyKind::Poisson:
          s.y(j) = static_cast<double>(std::poisson_distribution<long>(std::exp(eta))(rng));
          break;
        case FamilyKind::Binomial:
          s.y(j) = static_cast<double>(
              std::binomial_distribution<int>(static_cast<int>(sc.trials), logistic(eta))(rng));
          break;
        case FamilyKind::Bernoulli:
          s.y(j) = std::bernoulli_distribution(logistic(eta))(rng) ? 1.0 : 0.0;
          break;
        case FamilyKind::GaussianUnit:
          s.y(j) = eta + std::normal_distribution<double>()(rng);
          break;
      }
    }
    subjects.push_back(std::move(s));
  }
  return {Dataset(sc.family, 2, 1, std::move(subjects)), b, sc};
}

}  // namespace rvb
