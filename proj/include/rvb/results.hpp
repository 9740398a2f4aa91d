#pragma once

// Plain-text result files: summary (key=value header plus a parameter
// table), ELBO trace CSV, per-subject diagnostics CSV, and a state file that
// round-trips (mu, C) exactly so fits can be resumed or recombined offline.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rvb/posterior.hpp"
#include "rvb/recombine.hpp"

namespace rvb {

// Shortest round-trip representation.
std::string format_exact(double v);
// Nine significant digits, '.' decimal, independent of locale.
std::string format_sig9(double v);

struct SummaryRow {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
};

struct Summary {
  std::vector<std::pair<std::string, std::string>> header;  // written in order
  std::vector<SummaryRow> rows;
};

// Parameter names for theta_G: beta[name] then omega[k,l] (1-based, lower).
std::vector<std::string> global_names(const std::vector<std::string>& fixed_names, int r,
                                      bool include_omega);

void write_summary(const std::filesystem::path& path, const Summary& s);
void write_trace(const std::filesystem::path& path, const std::vector<double>& trace, int window);
void write_diagnostics(const std::filesystem::path& path, const std::vector<std::string>& groups,
                       const SubjectMarginals& m);

struct StateFile {
  std::map<std::string, std::string> meta;
  VariationalState state;
};

void write_state(const std::filesystem::path& path, const FitResult& fit,
                 const std::map<std::string, std::string>& meta);
StateFile read_state(const std::filesystem::path& path);

}  // namespace rvb
