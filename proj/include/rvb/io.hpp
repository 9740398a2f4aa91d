#pragma once

// Long-format CSV ingestion: one row per observation, grouped by a subject
// column. Grouping is stable in order of first appearance.

#include <filesystem>
#include <string>
#include <vector>

#include "rvb/model.hpp"

namespace rvb {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<long> lines;  // source line of each row

  int column(const std::string& name) const;  // throws MissingColumn
};

// Comma-separated, header row, optional double quotes around fields.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text);

enum class Intercept { X, Z, Both, None };
Intercept parse_intercept(std::string_view s);

struct DesignSpec {
  FamilyKind family = FamilyKind::Poisson;
  std::string response;
  std::string trials_col;  // Binomial only; otherwise ignored
  std::string group_col;
  std::vector<std::string> fixed;
  std::vector<std::string> random;
  Intercept intercept = Intercept::Both;
};

struct LoadedData {
  Dataset data;
  std::vector<std::string> groups;
  std::vector<std::string> fixed_names;   // including "(Intercept)" when injected
  std::vector<std::string> random_names;
};

LoadedData build_dataset(const CsvTable& table, const DesignSpec& spec);
LoadedData load_csv(const std::filesystem::path& path, const DesignSpec& spec);

}  // namespace rvb
