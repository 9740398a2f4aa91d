#include "rvb/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "rvb/error.hpp"

namespace rvb {
namespace {

std::vector<std::string> split_line(const std::string& line, long lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cur += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError(lineno, "unterminated quote");
  out.push_back(std::move(cur));
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

double parse_number(const std::string& cell, long line, const std::string& col) {
  const std::string t = trim(cell);
  double v = 0.0;
  const char* begin = t.data();
  const char* end = begin + t.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (t.empty() || ec != std::errc() || ptr != end) {
    throw ParseError(line, "column '" + col + "': '" + cell + "' is not a number");
  }
  return v;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < header.size(); ++k)
    if (header[k] == name) return static_cast<int>(k);
  throw MissingColumn("column '" + name + "' not found");
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto cells = split_line(line, lineno);
    for (auto& c : cells) c = trim(std::move(c));
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ParseError(lineno, "expected " + std::to_string(t.header.size()) + " fields, got " +
                                   std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
    t.lines.push_back(lineno);
  }
  if (t.header.empty()) throw ParseError(0, "empty file");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

Intercept parse_intercept(std::string_view s) {
  if (s == "x") return Intercept::X;
  if (s == "z") return Intercept::Z;
  if (s == "both") return Intercept::Both;
  if (s == "none") return Intercept::None;
  throw ConfigError("--intercept must be one of x, z, both, none");
}

LoadedData build_dataset(const CsvTable& table, const DesignSpec& spec) {
  const bool x_int = spec.intercept == Intercept::X || spec.intercept == Intercept::Both;
  const bool z_int = spec.intercept == Intercept::Z || spec.intercept == Intercept::Both;
  const int y_col = table.column(spec.response);
  const int g_col = table.column(spec.group_col);
  const bool binomial = spec.family == FamilyKind::Binomial;
  if (binomial && spec.trials_col.empty()) throw ConfigError("binomial family needs a trials column");
  const int m_col = binomial ? table.column(spec.trials_col) : -1;
  std::vector<int> f_cols;
  std::vector<int> r_cols;
  for (const auto& c : spec.fixed) f_cols.push_back(table.column(c));
  for (const auto& c : spec.random) r_cols.push_back(table.column(c));
  const int p = static_cast<int>(f_cols.size()) + (x_int ? 1 : 0);
  const int r = static_cast<int>(r_cols.size()) + (z_int ? 1 : 0);
  if (r < 1) throw ConfigError("at least one random effect is required");

  LoadedData out{Dataset(spec.family, p, r, {}), {}, {}, {}};
  if (x_int) out.fixed_names.push_back("(Intercept)");
  out.fixed_names.insert(out.fixed_names.end(), spec.fixed.begin(), spec.fixed.end());
  if (z_int) out.random_names.push_back("(Intercept)");
  out.random_names.insert(out.random_names.end(), spec.random.begin(), spec.random.end());

  std::map<std::string, std::size_t> index;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    const std::string& g = table.rows[k][static_cast<std::size_t>(g_col)];
    auto [it, inserted] = index.try_emplace(g, members.size());
    if (inserted) {
      members.emplace_back();
      out.groups.push_back(g);
    }
    members[it->second].push_back(k);
  }

  std::vector<Subject> subjects;
  subjects.reserve(members.size());
  for (const auto& rows : members) {
    const auto ni = static_cast<Eigen::Index>(rows.size());
    Subject s;
    s.y.resize(ni);
    s.trials = Vector::Ones(ni);
    s.x.resize(ni, p);
    s.z.resize(ni, r);
    for (Eigen::Index j = 0; j < ni; ++j) {
      const auto& row = table.rows[rows[static_cast<std::size_t>(j)]];
      const long line = table.lines[rows[static_cast<std::size_t>(j)]];
      auto num = [&](int col) {
        return parse_number(row[static_cast<std::size_t>(col)], line,
                            table.header[static_cast<std::size_t>(col)]);
      };
      s.y(j) = num(y_col);
      if (binomial) s.trials(j) = num(m_col);
      try {
        validate_observation(spec.family, s.y(j), s.trials(j));
      } catch (const InvalidResponse& e) {
        throw InvalidResponse(std::string(family_name(spec.family)) + " response on line " +
                              std::to_string(line) + ": " + e.what());
      }
      int c = 0;
      if (x_int) s.x(j, c++) = 1.0;
      for (int col : f_cols) s.x(j, c++) = num(col);
      c = 0;
      if (z_int) s.z(j, c++) = 1.0;
      for (int col : r_cols) s.z(j, c++) = num(col);
    }
    subjects.push_back(std::move(s));
  }
  out.data = Dataset(spec.family, p, r, std::move(subjects));
  return out;
}

LoadedData load_csv(const std::filesystem::path& path, const DesignSpec& spec) {
  return build_dataset(read_csv(path), spec);
}

}  // namespace rvb
