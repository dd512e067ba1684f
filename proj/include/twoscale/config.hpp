#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pipeline.hpp"

namespace twoscale {

/// Malformed configuration: carries the line and field that failed.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, std::string field, const std::string& what)
      : std::runtime_error(format(line, field, what)), line_(line), field_(std::move(field)) {}
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  static std::string format(int line, const std::string& field, const std::string& what) {
    std::string s = "config";
    if (line > 0) s += ":" + std::to_string(line);
    if (!field.empty()) s += ": field '" + field + "'";
    return s + ": " + what;
  }
  int line_;
  std::string field_;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Parses a real number, also accepting a fraction "p/q".
inline bool parse_real(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const auto slash = t.find('/');
  try {
    std::size_t used = 0;
    if (slash == std::string::npos) {
      out = std::stod(t, &used);
      return used == t.size() && std::isfinite(out);
    }
    double num = 0, den = 0;
    std::size_t u1 = 0, u2 = 0;
    const std::string a = trim(t.substr(0, slash)), b = trim(t.substr(slash + 1));
    num = std::stod(a, &u1);
    den = std::stod(b, &u2);
    if (u1 != a.size() || u2 != b.size() || den == 0.0) return false;
    out = num / den;
    return std::isfinite(out);
  } catch (const std::exception&) {
    return false;
  }
}

inline bool parse_int(const std::string& text, int& out) {
  const std::string t = trim(text);
  try {
    std::size_t used = 0;
    const long v = std::stol(t, &used);
    if (used != t.size() || v < -2147483647L || v > 2147483647L) return false;
    out = static_cast<int>(v);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

inline bool parse_bool(const std::string& text, bool& out) {
  const std::string t = trim(text);
  if (t == "true" || t == "yes" || t == "1" || t == "on") return out = true, true;
  if (t == "false" || t == "no" || t == "0" || t == "off") return out = false, true;
  return false;
}

inline bool parse_real_list(const std::string& text, std::vector<double>& out) {
  out.clear();
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0;
    if (!parse_real(item, v)) return false;
    out.push_back(v);
  }
  return !out.empty();
}

}  // namespace detail

/// Acceptance thresholds applied by the validate command.
struct ValidateThresholds {
  double min_slope_k1 = 1.8;      ///< slope of |λ_ε − λ_{ε,1}|
  double min_res_slope_k2 = 1.0;  ///< slope of the order-2 residual
};

struct FullConfig {
  RunConfig run;
  ValidateThresholds thresholds;
};

/// Checks ranges; `line_of` maps a field to the config line it came from.
inline void check_config(const FullConfig& fc, const std::function<int(const std::string&)>& line_of) {
  const RunConfig& c = fc.run;
  auto fail = [&](const std::string& f, const std::string& w) { throw ConfigError(line_of(f), f, w); };
  if (!(c.L > 0)) fail("L", "must be positive");
  if (c.M < 16) fail("M", "needs at least 16 nodes");
  if (c.K < 8 || c.K % 2) fail("K", "must be even and at least 8");
  if (!(c.radius > 0)) fail("radius", "must be positive");
  if (c.order < 0) fail("order", "must be non-negative");
  if (c.order > 4 && !c.allow_high_order) fail("order", "orders above 4 need allow_high_order = true");
  if (c.points_per_period < 8) fail("points_per_period", "needs at least 8 points per period");
  for (double e : c.eps)
    if (!(e > 0)) fail("eps", "every value must be positive");
  for (const char* f : {"group_tol", "degenerate_tol", "route_tol", "solvability_tol", "identity_tol",
                        "cell_residual_tol", "eigen_residual_tol"}) {
    const std::map<std::string, double> v{{"group_tol", c.group_tol},
                                          {"degenerate_tol", c.degenerate_tol},
                                          {"route_tol", c.route_tol},
                                          {"solvability_tol", c.solvability_tol},
                                          {"identity_tol", c.identity_tol},
                                          {"cell_residual_tol", c.cell_residual_tol},
                                          {"eigen_residual_tol", c.eigen_residual_tol}};
    if (!(v.at(f) > 0)) fail(f, "must be positive");
  }
}

/// Reads the flat `[problem] [grids] [spectral] [sweep]` format.  The
/// problem name selects the defaults every other key overrides; keys in
/// [problem] other than `name` override catalog parameters.
inline FullConfig parse_config(std::istream& in) {
  struct Entry {
    std::string value;
    int line;
  };
  std::map<std::string, std::map<std::string, Entry>> sections;
  const std::map<std::string, std::vector<std::string>> known{
      {"problem", {}},
      {"grids", {"L", "M", "K", "points_per_period", "cell_residual_tol", "identity_tol"}},
      {"spectral",
       {"target", "radius", "group_tol", "eigen_residual_tol", "degenerate_tol", "route_tol", "solvability_tol",
        "seed"}},
      {"sweep", {"order", "eps", "richardson", "allow_high_order", "min_slope_k1", "min_res_slope_k2"}}};
  std::string raw, section;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find_first_of("#;");
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(lineno, "", "unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (!known.count(section)) throw ConfigError(lineno, section, "unknown section");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(lineno, "", "expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(lineno, key, "key outside of any section");
    if (key.empty()) throw ConfigError(lineno, "", "empty key");
    if (value.empty()) throw ConfigError(lineno, key, "empty value");
    const auto& allowed = known.at(section);
    if (section != "problem" && std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(lineno, key, "unknown key in [" + section + "]");
    if (sections[section].count(key)) throw ConfigError(lineno, key, "duplicate key");
    sections[section][key] = {value, lineno};
  }

  FullConfig fc;
  std::string name = "well-1d";
  int name_line = 0;
  if (sections["problem"].count("name")) {
    name = sections["problem"]["name"].value;
    name_line = sections["problem"]["name"].line;
  }
  try {
    fc.run = defaults_for(name);
  } catch (const Error& e) {
    throw ConfigError(name_line, "name", e.what());
  }
  for (const auto& [key, e] : sections["problem"]) {
    if (key == "name") continue;
    double v = 0;
    if (!detail::parse_real(e.value, v)) throw ConfigError(e.line, key, "not a number: '" + e.value + "'");
    if (!catalog_entry(name).params.count(key))
      throw ConfigError(e.line, key, "problem '" + fc.run.problem + "' has no such parameter");
    fc.run.params[key] = v;
  }
  auto real = [&](const std::string& sec, const std::string& key, double& dst) {
    auto it = sections[sec].find(key);
    if (it == sections[sec].end()) return;
    if (!detail::parse_real(it->second.value, dst))
      throw ConfigError(it->second.line, key, "not a number: '" + it->second.value + "'");
  };
  auto integer = [&](const std::string& sec, const std::string& key, int& dst) {
    auto it = sections[sec].find(key);
    if (it == sections[sec].end()) return;
    if (!detail::parse_int(it->second.value, dst))
      throw ConfigError(it->second.line, key, "not an integer: '" + it->second.value + "'");
  };
  auto boolean = [&](const std::string& sec, const std::string& key, bool& dst) {
    auto it = sections[sec].find(key);
    if (it == sections[sec].end()) return;
    if (!detail::parse_bool(it->second.value, dst))
      throw ConfigError(it->second.line, key, "not a boolean: '" + it->second.value + "'");
  };
  RunConfig& c = fc.run;
  real("grids", "L", c.L);
  integer("grids", "M", c.M);
  integer("grids", "K", c.K);
  integer("grids", "points_per_period", c.points_per_period);
  real("grids", "cell_residual_tol", c.cell_residual_tol);
  real("grids", "identity_tol", c.identity_tol);
  real("spectral", "target", c.target);
  real("spectral", "radius", c.radius);
  real("spectral", "group_tol", c.group_tol);
  real("spectral", "eigen_residual_tol", c.eigen_residual_tol);
  real("spectral", "degenerate_tol", c.degenerate_tol);
  real("spectral", "route_tol", c.route_tol);
  real("spectral", "solvability_tol", c.solvability_tol);
  if (auto it = sections["spectral"].find("seed"); it != sections["spectral"].end()) {
    try {
      std::size_t used = 0;
      c.seed = std::stoull(it->second.value, &used, 0);
      if (used != it->second.value.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError(it->second.line, "seed", "not an unsigned integer: '" + it->second.value + "'");
    }
  }
  integer("sweep", "order", c.order);
  boolean("sweep", "richardson", c.richardson);
  boolean("sweep", "allow_high_order", c.allow_high_order);
  real("sweep", "min_slope_k1", fc.thresholds.min_slope_k1);
  real("sweep", "min_res_slope_k2", fc.thresholds.min_res_slope_k2);
  if (auto it = sections["sweep"].find("eps"); it != sections["sweep"].end())
    if (!detail::parse_real_list(it->second.value, c.eps))
      throw ConfigError(it->second.line, "eps", "expected a comma-separated list of numbers");

  check_config(fc, [&](const std::string& f) {
    for (const auto& [sec, entries] : sections)
      if (auto it = entries.find(f); it != entries.end()) return it->second.line;
    return 0;
  });
  return fc;
}

inline FullConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "", "cannot open '" + path + "'");
  return parse_config(in);
}

/// Shortest text that parses back to exactly `v`.
inline std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Config text reproducing `fc`; with the defaults of a catalog problem
/// this is the documented default configuration.
inline std::string render_config(const FullConfig& fc) {
  const RunConfig& c = fc.run;
  std::ostringstream os;
  const CatalogEntry& e = catalog_entry(c.problem);
  os << "[problem]\n";
  os << "name = " << c.problem << "    # " << e.description << "\n";
  for (const auto& [k, v] : e.params) {
    const auto it = c.params.find(k);
    os << k << " = " << format_real(it == c.params.end() ? v : it->second) << "\n";
  }
  os << "\n[grids]\n";
  os << "L = " << format_real(c.L) << "    # half width of the box [-L, L]^d\n";
  os << "M = " << c.M << "    # coarse nodes per axis\n";
  os << "K = " << c.K << "    # cell collocation points per axis\n";
  os << "points_per_period = " << c.points_per_period << "    # fine-grid points per eps-period\n";
  os << "cell_residual_tol = " << format_real(c.cell_residual_tol) << "\n";
  os << "identity_tol = " << format_real(c.identity_tol) << "\n";
  os << "\n[spectral]\n";
  os << "target = " << format_real(c.target) << "    # centre of the eigenvalue window\n";
  os << "radius = " << format_real(c.radius) << "    # half width of the eigenvalue window\n";
  os << "group_tol = " << format_real(c.group_tol) << "\n";
  os << "eigen_residual_tol = " << format_real(c.eigen_residual_tol) << "\n";
  os << "degenerate_tol = " << format_real(c.degenerate_tol) << "\n";
  os << "route_tol = " << format_real(c.route_tol) << "\n";
  os << "solvability_tol = " << format_real(c.solvability_tol) << "\n";
  os << "seed = " << c.seed << "\n";
  os << "\n[sweep]\n";
  os << "order = " << c.order << "    # maximal correction order k\n";
  os << "eps = ";
  for (std::size_t k = 0; k < c.eps.size(); ++k) os << (k ? ", " : "") << format_real(c.eps[k]);
  os << "\n";
  os << "richardson = " << (c.richardson ? "true" : "false") << "    # extrapolate lambda0 from M and 2M-1 nodes\n";
  os << "allow_high_order = " << (c.allow_high_order ? "true" : "false") << "\n";
  os << "min_slope_k1 = " << format_real(fc.thresholds.min_slope_k1) << "\n";
  os << "min_res_slope_k2 = " << format_real(fc.thresholds.min_res_slope_k2) << "\n";
  return os.str();
}

}  // namespace twoscale
