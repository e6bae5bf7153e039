#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "tvlate/data.hpp"

namespace tvlate {

enum class PartitionVariant { with_t, with_t_r, y_only };

/// Hard cap on cells: 2^16 sign functions is the largest enumerable class.
inline constexpr std::size_t kMaxCells = 16;

/// Nested discretization of the outcome (optionally crossed with T, R and
/// covariate cells) indexing the finite sign-function class.
struct CellPartition {
  std::vector<double> y_edges;                 // interior cut points, increasing
  bool split_by_t = false;
  bool split_by_r = false;
  std::vector<std::uint8_t> r_values;          // sorted distinct levels of R
  std::vector<std::vector<double>> v_edges;    // interior cuts per crossed covariate

  std::size_t y_cells() const { return y_edges.size() + 1; }

  std::size_t cell_count() const {
    std::size_t c = y_cells();
    if (split_by_t) c *= 2;
    if (split_by_r) c *= r_values.size();
    for (const auto& e : v_edges) c *= e.size() + 1;
    return c;
  }

  static std::size_t bin_of(double x, const std::vector<double>& edges) {
    return static_cast<std::size_t>(
        std::upper_bound(edges.begin(), edges.end(), x) - edges.begin());
  }

  /// Deterministic cell index; vrow points at the row's covariates (may be
  /// null when no covariate cells are used). Every observation maps to
  /// exactly one cell.
  std::size_t cell_index(double y, std::uint8_t t, std::uint8_t r,
                         const double* vrow, std::size_t d) const {
    std::size_t idx = bin_of(y, y_edges);
    if (split_by_t) idx = idx * 2 + t;
    if (split_by_r) {
      auto it = std::lower_bound(r_values.begin(), r_values.end(), r);
      if (it == r_values.end() || *it != r)
        throw ValidationError("repeated-measurement level not in partition");
      idx = idx * r_values.size() +
            static_cast<std::size_t>(it - r_values.begin());
    }
    for (std::size_t k = 0; k < v_edges.size(); ++k) {
      // covariate k+1 (column 0 is the constant)
      if (vrow == nullptr || k + 1 >= d)
        throw ValidationError("partition expects covariates the row lacks");
      idx = idx * (v_edges[k].size() + 1) + bin_of(vrow[k + 1], v_edges[k]);
    }
    return idx;
  }

  std::size_t cell_index(const ObservationTable& tab, std::size_t i) const {
    return cell_index(tab.y[i], tab.t[i], tab.has_r() ? tab.r[i] : 0,
                      tab.has_v() ? &tab.v[i * tab.d] : nullptr, tab.d);
  }
};

namespace detail {

/// Interior cut points at quantiles j/k of x, linear interpolation on the
/// sorted sample. Dyadic fractions nest across doubling k.
inline std::vector<double> quantile_edges(std::vector<double> x, int k) {
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  std::vector<double> edges;
  for (int j = 1; j < k; ++j) {
    const double pos = (static_cast<double>(j) / k) * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    const double e = lo + 1 < n ? x[lo] * (1.0 - frac) + x[lo + 1] * frac : x[lo];
    edges.push_back(e);
  }
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

inline std::vector<double> equal_width_edges(const std::vector<double>& x, int k) {
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  std::vector<double> edges;
  for (int j = 1; j < k; ++j)
    edges.push_back(*mn + (*mx - *mn) * static_cast<double>(j) / k);
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

}  // namespace detail

/// Builds the K_n-cell outcome partition. K_n counts outcome intervals; the
/// T (and R, covariate) crossings multiply the cell count. Cut points sit at
/// empirical dyadic quantiles by default, equally spaced when equal_width is
/// set (the Monte Carlo design uses equal spacing).
inline CellPartition build_partition(const ObservationTable& tab, int k_n,
                                     PartitionVariant variant, int v_cells = 0,
                                     bool equal_width = false,
                                     bool enforce_cap = true) {
  if (k_n < 1) throw ValidationError("k_n must be >= 1");
  const double ymin = *std::min_element(tab.y.begin(), tab.y.end());
  const double ymax = *std::max_element(tab.y.begin(), tab.y.end());
  if (ymin == ymax && k_n > 1)
    throw ValidationError("degenerate outcome: all values equal with k_n > 1");

  CellPartition part;
  if (k_n > 1)
    part.y_edges = equal_width ? detail::equal_width_edges(tab.y, k_n)
                               : detail::quantile_edges(tab.y, k_n);
  part.split_by_t = variant != PartitionVariant::y_only;
  part.split_by_r = variant == PartitionVariant::with_t_r;
  if (part.split_by_r) {
    if (!tab.has_r())
      throw ValidationError("with_t_r partition requires a repeated measurement");
    std::set<std::uint8_t> lv(tab.r.begin(), tab.r.end());
    part.r_values.assign(lv.begin(), lv.end());
  }
  if (v_cells > 1) {
    if (!tab.has_v())
      throw ValidationError("covariate cells requested without covariates");
    for (std::size_t j = 1; j < tab.d; ++j) {
      std::vector<double> col(tab.n);
      for (std::size_t i = 0; i < tab.n; ++i) col[i] = tab.v_at(i, j);
      part.v_edges.push_back(detail::quantile_edges(std::move(col), v_cells));
    }
  }
  // The cap protects sign-function enumeration; plug-in TV over a fine
  // partition (population objects use 64 outcome cells) opts out.
  if (enforce_cap && part.cell_count() > kMaxCells)
    throw ValidationError("cell count " + std::to_string(part.cell_count()) +
                          " exceeds the enumeration cap of " +
                          std::to_string(kMaxCells));
  return part;
}

/// Sign function b maps cell c to +1/2 when bit (C-1-c) of b is set, so the
/// enumeration counts in binary with cell 0 as the most significant digit:
/// 2 cells give (-,-), (-,+), (+,-), (+,+).
inline std::vector<double> sign_function(std::size_t b, std::size_t cells) {
  std::vector<double> h(cells);
  for (std::size_t c = 0; c < cells; ++c)
    h[c] = (b >> (cells - 1 - c)) & 1 ? 0.5 : -0.5;
  return h;
}

inline std::vector<std::vector<double>> enumerate_sign_functions(
    const CellPartition& part) {
  const std::size_t cells = part.cell_count();
  if (cells > kMaxCells) throw ValidationError("cell count exceeds cap");
  std::vector<std::vector<double>> out;
  out.reserve(std::size_t{1} << cells);
  for (std::size_t b = 0; b < (std::size_t{1} << cells); ++b)
    out.push_back(sign_function(b, cells));
  return out;
}

}  // namespace tvlate
