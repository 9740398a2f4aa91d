#pragma once

// Synthetic random-intercept data: eta_ij = beta0 + beta1 x_ij + b_i with
// b_i ~ N(0, sigma^2).

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rvb/model.hpp"

namespace rvb {

enum class Covariate {
  Visit,      // x_ij = (j - 4) / 10
  Bernoulli,  // x_ij ~ Bernoulli(0.5)
};

struct Scenario {
  std::string name;
  FamilyKind family = FamilyKind::Poisson;
  int n = 500;
  int n_i = 7;
  double beta0 = 0.0;
  double beta1 = 0.0;
  double sigma = 1.5;
  double trials = 1.0;
  Covariate covariate = Covariate::Visit;
};

// poisson-1, poisson-2, bernoulli-1, bernoulli-2, binomial-1, binomial-2
Scenario named_scenario(std::string_view name);
std::vector<std::string> scenario_names();

struct SimulatedData {
  Dataset data;
  Vector b;  // generating random intercepts
  Scenario scenario;
};

SimulatedData simulate_dataset(const Scenario& sc, std::uint64_t seed);

}  // namespace rvb
