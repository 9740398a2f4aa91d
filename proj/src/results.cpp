#include "rvb/results.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "rvb/error.hpp"
#include "rvb/io.hpp"

namespace rvb {
namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

double parse_exact(const std::string& s, long line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(line, "bad number '" + s + "' in state file");
  }
  return v;
}

int parse_int(const std::map<std::string, std::string>& meta, const std::string& key) {
  const auto it = meta.find(key);
  if (it == meta.end()) throw MissingColumn("state file lacks '" + key + "'");
  int v = 0;
  const auto [ptr, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc() || ptr != it->second.data() + it->second.size()) {
    throw ParseError(0, "state file key '" + key + "' is not an integer");
  }
  return v;
}

}  // namespace

std::string format_exact(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string format_sig9(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] =
      std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 9);
  return std::string(buf.data(), ptr);
}

std::vector<std::string> global_names(const std::vector<std::string>& fixed_names, int r,
                                      bool include_omega) {
  std::vector<std::string> names;
  for (const auto& f : fixed_names) names.push_back("beta[" + f + "]");
  if (include_omega) {
    for (int c = 1; c <= r; ++c)
      for (int k = c; k <= r; ++k)
        names.push_back("omega[" + std::to_string(k) + "," + std::to_string(c) + "]");
  }
  return names;
}

void write_summary(const std::filesystem::path& path, const Summary& s) {
  auto out = open_out(path);
  for (const auto& [k, v] : s.header) out << k << '=' << v << '\n';
  out << "parameter,mean,sd\n";
  for (const auto& row : s.rows) {
    out << row.name << ',' << format_sig9(row.mean) << ',' << format_sig9(row.sd) << '\n';
  }
}

void write_trace(const std::filesystem::path& path, const std::vector<double>& trace, int window) {
  auto out = open_out(path);
  out << "window,iteration,mean_elbo\n";
  for (std::size_t k = 0; k < trace.size(); ++k) {
    out << k + 1 << ',' << (k + 1) * static_cast<std::size_t>(window) << ','
        << format_sig9(trace[k]) << '\n';
  }
}

void write_diagnostics(const std::filesystem::path& path, const std::vector<std::string>& groups,
                       const SubjectMarginals& m) {
  auto out = open_out(path);
  out << "group,component,bt_mean,bt_sd,b_mean,b_sd\n";
  for (Eigen::Index i = 0; i < m.b_mean.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.b_mean.cols(); ++k) {
      const std::string g = static_cast<std::size_t>(i) < groups.size()
                                ? groups[static_cast<std::size_t>(i)]
                                : std::to_string(i + 1);
      out << g << ',' << k + 1 << ',' << format_sig9(m.bt_mean(i, k)) << ','
          << format_sig9(m.bt_sd(i, k)) << ',' << format_sig9(m.b_mean(i, k)) << ','
          << format_sig9(m.b_sd(i, k)) << '\n';
    }
  }
}

void write_state(const std::filesystem::path& path, const FitResult& fit,
                 const std::map<std::string, std::string>& meta) {
  const VariationalState& st = fit.state;
  auto out = open_out(path);
  out << "format=rvb-state-1\n";
  out << "n=" << st.n() << "\nr=" << st.r() << "\ng=" << st.g() << '\n';
  for (const auto& [k, v] : meta) {
    if (k == "format" || k == "n" || k == "r" || k == "g") continue;
    out << k << '=' << v << '\n';
  }
  out << "kind,block,row,col,value\n";
  for (int k = 0; k < st.dim(); ++k) out << "mu,0," << k << ",0," << format_exact(st.mu()(k)) << '\n';
  for (int b = 0; b < st.block_count(); ++b) {
    const Matrix& c = st.block(b);
    for (Eigen::Index col = 0; col < c.cols(); ++col)
      for (Eigen::Index row = col; row < c.rows(); ++row)
        out << "C," << b << ',' << row << ',' << col << ',' << format_exact(c(row, col)) << '\n';
  }
}

StateFile read_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  StateFile sf;
  std::string line;
  long lineno = 0;
  std::ostringstream body;
  bool in_body = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!in_body) {
      if (line.rfind("kind,", 0) == 0) {
        in_body = true;
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(lineno, "expected key=value");
      sf.meta[line.substr(0, eq)] = line.substr(eq + 1);
      continue;
    }
    if (line.empty()) continue;
    std::array<std::string, 5> f;
    std::istringstream ls(line);
    for (auto& cell : f) {
      if (!std::getline(ls, cell, ',')) throw ParseError(lineno, "expected 5 fields");
    }
    const int block = static_cast<int>(parse_exact(f[1], lineno));
    const int row = static_cast<int>(parse_exact(f[2], lineno));
    const int col = static_cast<int>(parse_exact(f[3], lineno));
    const double v = parse_exact(f[4], lineno);
    if (sf.state.dim() == 0) {
      sf.state = VariationalState(parse_int(sf.meta, "n"), parse_int(sf.meta, "r"),
                                  parse_int(sf.meta, "g"));
    }
    if (f[0] == "mu") {
      if (row < 0 || row >= sf.state.dim()) throw ParseError(lineno, "mu index out of range");
      sf.state.mu()(row) = v;
    } else if (f[0] == "C") {
      if (block < 0 || block >= sf.state.block_count() || row < col || col < 0 ||
          row >= sf.state.block_size(block)) {
        throw ParseError(lineno, "C entry out of range");
      }
      Matrix c = sf.state.block(block);
      c(row, col) = v;
      sf.state.set_block(block, std::move(c));
    } else {
      throw ParseError(lineno, "unknown record '" + f[0] + "'");
    }
  }
  if (!in_body) throw ParseError(lineno, "state file has no payload");
  if (sf.state.dim() == 0) {
    sf.state = VariationalState(parse_int(sf.meta, "n"), parse_int(sf.meta, "r"),
                                parse_int(sf.meta, "g"));
  }
  return sf;
}

}  // namespace rvb
