// Batch front end: fit a GLMM from CSV, simulate the study scenarios, or
// recombine shard state files.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "rvb/error.hpp"
#include "rvb/io.hpp"
#include "rvb/posterior.hpp"
#include "rvb/recombine.hpp"
#include "rvb/results.hpp"
#include "rvb/simulate.hpp"

namespace fs = std::filesystem;
using namespace rvb;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

struct FitOptions {
  std::string data;
  std::string family = "poisson";
  std::string response;
  std::string trials_col;
  std::string group_col;
  std::vector<std::string> fixed;
  std::vector<std::string> random;
  std::string intercept = "both";
  std::string method = "a2";
  std::string prior = "default";
  std::string prior_file;
  double omega_sd = 10.0;
  double sigma_beta = 10.0;
  std::string estimator = "l2";
  std::uint64_t seed = 1;
  int shards = 1;
  long max_iter = 200000;
  int draws = 50000;
  bool allow_gaussian = false;
  std::string out = ".";
};

struct SimulateOptions {
  std::string scenario;
  std::uint64_t seed = 1;
  int n = 500;
  int n_i = 7;
  std::string out;
};

struct CombineOptions {
  std::vector<std::string> states;
  int draws = 50000;
  std::uint64_t seed = 1;
  std::string out = ".";
};

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("prior file: expected key=value, got '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ConfigError("'" + cell + "' is not a number");
    }
  }
  return out;
}

// nu=<value>, scale=<r*r values, row major>, optional sigma_beta2=<value>.
Priors prior_from_file(const fs::path& path, int r) {
  const auto kv = read_key_values(path);
  const auto nu = kv.find("nu");
  const auto scale = kv.find("scale");
  if (nu == kv.end() || scale == kv.end()) throw ConfigError("prior file needs nu and scale");
  const auto values = parse_list(scale->second);
  if (static_cast<int>(values.size()) != r * r) {
    throw ConfigError("prior scale needs " + std::to_string(r * r) + " entries");
  }
  Matrix s(r, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) s(i, j) = values[static_cast<std::size_t>(i * r + j)];
  double sb2 = 100.0;
  if (const auto it = kv.find("sigma_beta2"); it != kv.end()) sb2 = parse_list(it->second).at(0);
  return Priors::wishart(parse_list(nu->second).at(0), s, sb2);
}

Estimator parse_estimator(const std::string& s) {
  if (s == "l1") return Estimator::L1;
  if (s == "l2") return Estimator::L2;
  if (s == "l3") return Estimator::L3;
  throw ConfigError("--estimator must be l1, l2 or l3");
}

void write_timing(const fs::path& dir, double seconds) {
  std::ofstream out(dir / "timing.txt");
  out << "seconds=" << format_sig9(seconds) << '\n';
}

void add_global_rows(Summary& s, const std::vector<std::string>& names, const Vector& mean,
                     const Vector& sd) {
  for (std::size_t k = 0; k < names.size(); ++k) {
    s.rows.push_back({names[k], mean(static_cast<Eigen::Index>(k)), sd(static_cast<Eigen::Index>(k))});
  }
}

void add_scale_rows(Summary& s, int r, const Moments& m) {
  const auto names = scale_names(r);
  for (std::size_t k = 0; k < names.size(); ++k) {
    s.rows.push_back({names[k], m.mean(static_cast<Eigen::Index>(k)), m.sd(static_cast<Eigen::Index>(k))});
  }
}

int run_fit(const FitOptions& o) {
  const auto start = std::chrono::steady_clock::now();
  DesignSpec spec;
  spec.family = parse_family(o.family);
  if (spec.family == FamilyKind::GaussianUnit && !o.allow_gaussian) {
    throw ConfigError("the gaussian-unit family requires --allow-gaussian-unit");
  }
  spec.response = o.response;
  spec.trials_col = o.trials_col;
  spec.group_col = o.group_col;
  spec.fixed = o.fixed;
  spec.random = o.random;
  spec.intercept = parse_intercept(o.intercept);
  if (o.shards < 1) throw InvalidV("--shards must be at least 1");
  FitConfig cfg;
  cfg.method = parse_method(o.method);
  cfg.seed = o.seed;
  cfg.max_iter = o.max_iter;
  cfg.estimator = parse_estimator(o.estimator);
  if (o.draws < 1) throw ConfigError("--draws must be positive");

  const LoadedData ld = load_csv(o.data, spec);
  const Dataset& data = ld.data;
  if (o.shards > data.n()) {
    throw InvalidV("--shards (" + std::to_string(o.shards) + ") exceeds the number of subjects (" +
                   std::to_string(data.n()) + ")");
  }
  const double sb2 = o.sigma_beta * o.sigma_beta;
  Priors pr;
  if (o.prior == "default") {
    pr = default_prior(data, sb2);
  } else if (o.prior == "normal-omega") {
    pr = Priors::normal_omega(data.r(), o.omega_sd, sb2);
  } else if (o.prior == "file") {
    if (o.prior_file.empty()) throw ConfigError("--prior file needs --prior-file");
    pr = prior_from_file(o.prior_file, data.r());
  } else {
    throw ConfigError("--prior must be default, normal-omega or file");
  }
  if (o.shards > 1 && pr.is_wishart()) {
    throw ConfigError("sharded fits need --prior normal-omega");
  }

  fs::create_directories(o.out);
  const fs::path dir(o.out);
  const auto names = global_names(ld.fixed_names, data.r(), true);
  Summary s;
  s.header = {{"family", std::string(family_name(data.family()))},
              {"method", std::string(method_name(cfg.method))},
              {"prior", o.prior},
              {"n", std::to_string(data.n())},
              {"observations", std::to_string(data.observations())},
              {"p", std::to_string(data.p())},
              {"r", std::to_string(data.r())},
              {"seed", std::to_string(o.seed)},
              {"shards", std::to_string(o.shards)}};
  if (pr.is_wishart()) {
    const WishartPrior& w = pr.wishart_prior();
    s.header.emplace_back("prior_nu", format_sig9(w.nu));
    std::string scale;
    for (Eigen::Index i = 0; i < w.scale.rows(); ++i)
      for (Eigen::Index j = 0; j < w.scale.cols(); ++j)
        scale += (scale.empty() ? "" : ",") + format_sig9(w.scale(i, j));
    s.header.emplace_back("prior_scale", scale);
  }
  std::map<std::string, std::string> meta{{"family", std::string(family_name(data.family()))},
                                          {"method", std::string(method_name(cfg.method))},
                                          {"prior", o.prior},
                                          {"p", std::to_string(data.p())},
                                          {"sigma_beta2", format_exact(sb2)},
                                          {"omega_sd", format_exact(o.omega_sd)}};

  if (o.shards == 1) {
    const FitResult res = fit(data, pr, cfg);
    const PosteriorSummary ps = summarise(data, pr, res, o.draws, o.seed);
    s.header.emplace_back("iterations", std::to_string(res.iterations));
    s.header.emplace_back("converged", res.converged ? "true" : "false");
    s.header.emplace_back("retries", std::to_string(res.retries));
    s.header.emplace_back("elbo", format_sig9(res.elbo));
    s.header.emplace_back("elbo_se", format_sig9(res.elbo_se));
    s.header.emplace_back("draws", std::to_string(ps.draws));
    s.header.emplace_back("rejected", std::to_string(ps.rejected));
    add_global_rows(s, names, ps.global.mean, ps.global.sd);
    add_scale_rows(s, data.r(), ps.scales);
    if (ps.rejection_warning) {
      std::cerr << "warning: " << ps.rejected << " posterior draws were rejected\n";
    }
    write_summary(dir / "summary.txt", s);
    write_trace(dir / "trace.csv", res.trace, cfg.window);
    write_diagnostics(dir / "diagnostics.csv", ld.groups, ps.subjects);
    write_state(dir / "state.csv", res, meta);
  } else {
    const ShardedResult sr = fit_sharded(data, pr, cfg, o.shards, o.seed);
    for (std::size_t v = 0; v < sr.shards.size(); ++v) {
      const FitResult& f = sr.shards[v];
      const std::string tag = "shard" + std::to_string(v + 1);
      s.header.emplace_back(tag + "_n", std::to_string(sr.members[v].size()));
      s.header.emplace_back(tag + "_iterations", std::to_string(f.iterations));
      s.header.emplace_back(tag + "_elbo", format_sig9(f.elbo));
      write_trace(dir / (tag + "_trace.csv"), f.trace, cfg.window);
      write_state(dir / (tag + "_state.csv"), f, meta);
    }
    const Vector sd = sr.combined.cov.diagonal().cwiseSqrt();
    add_global_rows(s, names, sr.combined.mean, sd);
    add_scale_rows(s, data.r(),
                   scale_moments(sr.combined.mean, sr.combined.cov, data.p(), data.r(), o.draws, o.seed));
    write_summary(dir / "summary.txt", s);
  }
  write_timing(dir, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  return 0;
}

int run_simulate(const SimulateOptions& o) {
  Scenario sc = named_scenario(o.scenario);
  sc.n = o.n;
  sc.n_i = o.n_i;
  const SimulatedData sim = simulate_dataset(sc, o.seed);
  std::ofstream out(o.out, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + o.out);
  out << "subject,x,y,trials\n";
  for (int i = 0; i < sim.data.n(); ++i) {
    const Subject& s = sim.data.subject(i);
    for (Eigen::Index j = 0; j < s.y.size(); ++j) {
      out << i + 1 << ',' << format_exact(s.x(j, 1)) << ',' << format_exact(s.y(j)) << ','
          << format_exact(s.trials(j)) << '\n';
    }
  }
  std::ofstream truth(o.out + ".truth", std::ios::binary | std::ios::trunc);
  truth << "scenario=" << sc.name << "\nfamily=" << family_name(sc.family) << "\nseed=" << o.seed
        << "\nn=" << sc.n << "\nn_i=" << sc.n_i << "\nbeta0=" << format_exact(sc.beta0)
        << "\nbeta1=" << format_exact(sc.beta1) << "\nsigma=" << format_exact(sc.sigma) << '\n';
  return 0;
}

int run_combine(const CombineOptions& o) {
  if (o.states.empty()) throw InvalidV("combine needs at least one state file");
  std::vector<GaussianFactor> factors;
  std::map<std::string, std::string> first;
  int p = 0;
  int r = 0;
  for (const auto& path : o.states) {
    const StateFile sf = read_state(path);
    if (factors.empty()) {
      first = sf.meta;
      if (first["prior"] != "normal-omega") throw ConfigError("combine requires normal-omega fits");
      p = std::stoi(first.at("p"));
      r = sf.state.r();
    } else if (sf.state.r() != r || sf.state.g() != static_cast<int>(factors.front().mean.size())) {
      throw LengthMismatch(path + " has different dimensions");
    }
    const VariationalState& st = sf.state;
    factors.push_back({st.mu().tail(st.g()), st.block_cov(st.block_count() - 1)});
  }
  Priors pr = Priors::normal_omega(r, std::stod(first.at("omega_sd")), std::stod(first.at("sigma_beta2")));
  const GaussianFactor c = combine(factors, prior_factor(pr, p));
  std::vector<std::string> fixed;
  for (int k = 1; k <= p; ++k) fixed.push_back(std::to_string(k));
  Summary s;
  s.header = {{"family", first["family"]}, {"method", first["method"]},
              {"prior", "normal-omega"}, {"shards", std::to_string(factors.size())}};
  add_global_rows(s, global_names(fixed, r, true), c.mean, c.cov.diagonal().cwiseSqrt());
  add_scale_rows(s, r, scale_moments(c.mean, c.cov, p, r, o.draws, o.seed));
  fs::create_directories(o.out);
  write_summary(fs::path(o.out) / "summary.txt", s);
  return 0;
}

int exit_code(const Error& e) {
  switch (e.category()) {
    case ErrorCategory::Config:
      return kExitConfig;
    case ErrorCategory::Data:
      return kExitData;
    case ErrorCategory::Numerical:
      return kExitDiverged;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reparameterised variational Bayes for two-level GLMMs"};
  app.require_subcommand(1);

  FitOptions fo;
  auto* fit_cmd = app.add_subcommand("fit", "fit a model to long-format CSV data");
  fit_cmd->add_option("--data", fo.data, "input CSV")->required();
  fit_cmd->add_option("--family", fo.family, "poisson, binomial or bernoulli");
  fit_cmd->add_option("--response", fo.response, "response column")->required();
  fit_cmd->add_option("--trials-col", fo.trials_col, "binomial trials column");
  fit_cmd->add_option("--group-col", fo.group_col, "subject column")->required();
  fit_cmd->add_option("--fixed", fo.fixed, "fixed-effect columns")->delimiter(',');
  fit_cmd->add_option("--random", fo.random, "random-effect columns")->delimiter(',');
  fit_cmd->add_option("--intercept", fo.intercept, "x, z, both or none");
  fit_cmd->add_option("--method", fo.method, "a1 or a2");
  fit_cmd->add_option("--prior", fo.prior, "default, normal-omega or file");
  fit_cmd->add_option("--prior-file", fo.prior_file, "Wishart prior (nu=, scale=)");
  fit_cmd->add_option("--omega-sd", fo.omega_sd, "sd of the normal-omega prior");
  fit_cmd->add_option("--sigma-beta", fo.sigma_beta, "prior sd of the fixed effects");
  fit_cmd->add_option("--estimator", fo.estimator, "l1, l2 or l3");
  fit_cmd->add_option("--seed", fo.seed);
  fit_cmd->add_option("--shards", fo.shards, "number of shards for divide and recombine");
  fit_cmd->add_option("--max-iter", fo.max_iter);
  fit_cmd->add_option("--draws", fo.draws, "posterior simulation draws");
  fit_cmd->add_flag("--allow-gaussian-unit", fo.allow_gaussian, "permit the unit-variance gaussian family");
  fit_cmd->add_option("--out", fo.out, "output directory");

  SimulateOptions so;
  auto* sim_cmd = app.add_subcommand("simulate", "simulate a random-intercept study dataset");
  sim_cmd->add_option("--scenario", so.scenario, "poisson-1, poisson-2, bernoulli-1, ...")->required();
  sim_cmd->add_option("--seed", so.seed);
  sim_cmd->add_option("--n", so.n);
  sim_cmd->add_option("--ni", so.n_i);
  sim_cmd->add_option("--out", so.out, "output CSV")->required();

  CombineOptions co;
  auto* comb_cmd = app.add_subcommand("combine", "recombine shard state files");
  comb_cmd->add_option("--states", co.states, "state files")->required();
  comb_cmd->add_option("--draws", co.draws);
  comb_cmd->add_option("--seed", co.seed);
  comb_cmd->add_option("--out", co.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  try {
    if (*fit_cmd) return run_fit(fo);
    if (*sim_cmd) return run_simulate(so);
    if (*comb_cmd) return run_combine(co);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
