#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tvlate {

/// Thrown for any malformed input; validation never yields a partial table.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Immutable columnar sample of (Y, T, Z, optional R, covariates V).
/// t, z hold 0/1; r is empty unless a repeated measurement is present;
/// v is row-major n x d with a leading constant column when covariates exist.
struct ObservationTable {
  std::vector<double> y;
  std::vector<std::uint8_t> t;
  std::vector<std::uint8_t> z;
  std::vector<std::uint8_t> r;
  std::vector<double> v;
  std::size_t n = 0;
  std::size_t d = 0;

  bool has_r() const { return !r.empty(); }
  bool has_v() const { return d > 0; }
  double v_at(std::size_t i, std::size_t j) const { return v[i * d + j]; }

  double z_mean() const {
    double s = 0;
    for (auto zi : z) s += zi;
    return s / static_cast<double>(n);
  }
};

/// Bounds of the parameter space Theta, needed when TV = 0 leaves the
/// identified set equal to the whole space.
struct ParameterSpace {
  double lo;
  double hi;
};

inline void validate_parameter_space(const ParameterSpace& ps) {
  if (!std::isfinite(ps.lo) || !std::isfinite(ps.hi) || !(ps.lo < ps.hi))
    throw ValidationError("parameter space requires finite theta_lo < theta_hi");
}

inline constexpr std::size_t kMaxRLevels = 16;

/// Builds a validated table. Covariate columns are passed without the
/// constant; a constant column is prepended unless one is already present.
inline ObservationTable make_table(std::vector<double> y,
                                   std::vector<std::uint8_t> t,
                                   std::vector<std::uint8_t> z,
                                   std::vector<std::uint8_t> r = {},
                                   std::vector<std::vector<double>> v_cols = {}) {
  const std::size_t n = y.size();
  if (n < 2) throw ValidationError("table requires at least 2 rows");
  if (t.size() != n || z.size() != n || (!r.empty() && r.size() != n))
    throw ValidationError("column lengths differ");
  for (const auto& col : v_cols)
    if (col.size() != n) throw ValidationError("covariate column length differs");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(y[i])) throw ValidationError("non-finite outcome value");
    if (t[i] > 1) throw ValidationError("non-binary value in t");
    if (z[i] > 1) throw ValidationError("non-binary value in z");
  }
  double zsum = 0;
  for (auto zi : z) zsum += zi;
  if (zsum <= 0.0 || zsum >= static_cast<double>(n))
    throw ValidationError("instrument has a single arm");
  if (!r.empty()) {
    std::set<std::uint8_t> lv(r.begin(), r.end());
    if (lv.size() > kMaxRLevels)
      throw ValidationError("repeated measurement has too many levels");
  }

  ObservationTable tab;
  tab.y = std::move(y);
  tab.t = std::move(t);
  tab.z = std::move(z);
  tab.r = std::move(r);
  tab.n = n;
  if (!v_cols.empty()) {
    bool have_const = false;
    for (const auto& col : v_cols) {
      bool all_one = true;
      for (double x : col) {
        if (!std::isfinite(x)) throw ValidationError("non-finite covariate value");
        if (x != 1.0) all_one = false;
      }
      if (all_one) have_const = true;
    }
    const std::size_t d = v_cols.size() + (have_const ? 0 : 1);
    tab.d = d;
    tab.v.resize(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t j = 0;
      if (!have_const) tab.v[i * d + j++] = 1.0;
      for (const auto& col : v_cols) tab.v[i * d + j++] = col[i];
    }
  }
  return tab;
}

// ---------------------------------------------------------------------------
// CSV ingestion:  --schema y=<col>,t=<col>,z=<col>[,r=<col>][,v=<c1;c2;...>]
// ---------------------------------------------------------------------------

struct CsvSchema {
  std::string y, t, z;
  std::string r;                   // empty = absent
  std::vector<std::string> v;      // empty = no covariates
};

inline CsvSchema parse_schema(const std::string& spec) {
  CsvSchema s;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos)
      throw ValidationError("schema entry '" + item + "' is not key=value");
    std::string key = item.substr(0, eq), val = item.substr(eq + 1);
    if (key == "y") s.y = val;
    else if (key == "t") s.t = val;
    else if (key == "z") s.z = val;
    else if (key == "r") s.r = val;
    else if (key == "v") {
      std::stringstream vs(val);
      std::string col;
      while (std::getline(vs, col, ';'))
        if (!col.empty()) s.v.push_back(col);
    } else {
      throw ValidationError("unknown schema role '" + key + "'");
    }
  }
  if (s.y.empty() || s.t.empty() || s.z.empty())
    throw ValidationError("schema must map y, t and z");
  return s;
}

struct LoadReport {
  ObservationTable table;
  std::size_t dropped_rows = 0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* b = s.c_str();
  char* end = nullptr;
  out = std::strtod(b, &end);
  while (end && *end == ' ') ++end;
  return end && *end == '\0' && std::isfinite(out);
}

inline bool parse_binary(const std::string& s, std::uint8_t& out) {
  double x;
  if (!parse_real(s, x)) return false;
  if (x == 0.0) { out = 0; return true; }
  if (x == 1.0) { out = 1; return true; }
  return false;
}

inline bool parse_small_int(const std::string& s, std::uint8_t& out) {
  double x;
  if (!parse_real(s, x)) return false;
  if (x < 0 || x > 255 || x != std::floor(x)) return false;
  out = static_cast<std::uint8_t>(x);
  return true;
}

}  // namespace detail

/// Loads a CSV with one header row. In strict mode (default) any row with a
/// missing or malformed mapped field aborts the load; in lenient mode such
/// rows are dropped and counted.
inline LoadReport load_csv(const std::string& path, const CsvSchema& schema,
                           bool lenient = false) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty file");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB &&
      static_cast<unsigned char>(line[2]) == 0xBF)
    line.erase(0, 3);
  const auto header = detail::split_csv_line(line);
  auto col_of = [&](const std::string& name) -> std::size_t {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    throw ValidationError("missing column '" + name + "'");
  };
  const std::size_t cy = col_of(schema.y), ct = col_of(schema.t), cz = col_of(schema.z);
  const bool with_r = !schema.r.empty();
  const std::size_t cr = with_r ? col_of(schema.r) : 0;
  std::vector<std::size_t> cv;
  for (const auto& name : schema.v) cv.push_back(col_of(name));

  std::vector<double> y;
  std::vector<std::uint8_t> t, z, r;
  std::vector<std::vector<double>> v_cols(cv.size());
  std::size_t dropped = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    double yi;
    std::uint8_t ti, zi, ri = 0;
    std::vector<double> vi(cv.size());
    bool ok = f.size() > std::max({cy, ct, cz, with_r ? cr : std::size_t{0}}) &&
              detail::parse_real(f[cy], yi) && detail::parse_binary(f[ct], ti) &&
              detail::parse_binary(f[cz], zi) &&
              (!with_r || detail::parse_small_int(f[cr], ri));
    for (std::size_t k = 0; ok && k < cv.size(); ++k)
      ok = cv[k] < f.size() && detail::parse_real(f[cv[k]], vi[k]);
    if (!ok) {
      if (lenient) {
        ++dropped;
        continue;
      }
      throw ValidationError("malformed row at line " + std::to_string(lineno) +
                            " of '" + path + "'");
    }
    y.push_back(yi);
    t.push_back(ti);
    z.push_back(zi);
    if (with_r) r.push_back(ri);
    for (std::size_t k = 0; k < cv.size(); ++k) v_cols[k].push_back(vi[k]);
  }
  if (y.empty()) throw ValidationError("empty table");
  LoadReport rep;
  rep.table = make_table(std::move(y), std::move(t), std::move(z), std::move(r),
                         std::move(v_cols));
  rep.dropped_rows = dropped;
  return rep;
}

/// Writes the table back out with 17 significant digits, so that a
/// load -> save -> load cycle is bit identical for finite reals.
inline void save_csv(const ObservationTable& tab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << "y,t,z";
  if (tab.has_r()) out << ",r";
  for (std::size_t j = 1; j < tab.d; ++j) out << ",v" << j;
  out << "\n";
  char buf[64];
  for (std::size_t i = 0; i < tab.n; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", tab.y[i]);
    out << buf << ',' << int(tab.t[i]) << ',' << int(tab.z[i]);
    if (tab.has_r()) out << ',' << int(tab.r[i]);
    for (std::size_t j = 1; j < tab.d; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", tab.v_at(i, j));
      out << ',' << buf;
    }
    out << "\n";
  }
}

}  // namespace tvlate
