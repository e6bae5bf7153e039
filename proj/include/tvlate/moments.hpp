#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "tvlate/data.hpp"
#include "tvlate/partition.hpp"
#include "tvlate/propensity.hpp"

namespace tvlate {

/// sgn(0) = +1, matching sgn(x) = 1{x >= 0} - 1{x < 0}.
inline double sgn(double x) { return x >= 0.0 ? 1.0 : -1.0; }

/// Sample mean of [(z_i - pi_i) / (pi_i (1 - pi_i))] x_i. With pi = mean(z)
/// this equals the two-group mean difference of x exactly.
inline double weighted_delta(const ObservationTable& tab,
                             const PropensityModel& pi,
                             const std::vector<double>& x) {
  if (x.size() != tab.n) throw ValidationError("weighted_delta: length mismatch");
  double s = 0;
  for (std::size_t i = 0; i < tab.n; ++i) {
    const double p = pi.fitted[i];
    s += (tab.z[i] - p) / (p * (1.0 - p)) * x[i];
  }
  return s / static_cast<double>(tab.n);
}

inline double weighted_delta_y(const ObservationTable& tab,
                               const PropensityModel& pi) {
  return weighted_delta(tab, pi, tab.y);
}

inline double weighted_delta_t(const ObservationTable& tab,
                               const PropensityModel& pi) {
  std::vector<double> x(tab.n);
  for (std::size_t i = 0; i < tab.n; ++i) x[i] = tab.t[i];
  return weighted_delta(tab, pi, x);
}

/// Estimated means and standard deviations (divisor n) of the p_n moment
/// functions at a candidate theta. Moment 0 is g_1, moment 1 is g_2, moment
/// 2+j belongs to the j-th enumerated sign function. Degenerate moments
/// (zero variance) are flagged rather than silently used.
struct MomentStats {
  std::vector<double> m;
  std::vector<double> sd;
  std::vector<std::uint8_t> degenerate;
  std::size_t p_n = 0;
};

/// The moment system g_1, g_2, g_{2+j} over a cell partition, reduced to
/// per-cell aggregates so that evaluating any moment at any theta is O(1):
///   g_1      = -w sgn(theta) Y
///   g_2      =  w sgn(theta) Y - |theta|
///   g_{2+j}  =  w (|theta| h_j(cell) - sgn(theta) Y),  w = (Z-pi)/(pi(1-pi)).
/// All row reductions run in fixed index order, so results do not depend on
/// threading.
class MomentSystem {
 public:
  MomentSystem(const ObservationTable& tab, const CellPartition& part,
               const PropensityModel& pi)
      : n_(tab.n), cells_(part.cell_count()) {
    if (cells_ > kMaxCells) throw ValidationError("cell count exceeds cap");
    if (pi.fitted.size() != tab.n)
      throw ValidationError("propensity fitted on a different sample");
    w_.resize(n_);
    wy_.resize(n_);
    cell_.resize(n_);
    cell_w_.assign(cells_, 0.0);
    cell_w2y_.assign(cells_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      const double p = pi.fitted[i];
      const double w = (tab.z[i] - p) / (p * (1.0 - p));
      const double y = tab.y[i];
      w_[i] = w;
      wy_[i] = w * y;
      swy_ += w * y;
      sw2_ += w * w;
      sw2y2_ += w * w * y * y;
      const std::size_t c = part.cell_index(tab, i);
      cell_[i] = c;
      cell_w_[c] += w;
      cell_w2y_[c] += w * w * y;
    }
    u_ = subset_dots(cell_w_);
    v_ = subset_dots(cell_w2y_);
  }

  std::size_t n() const { return n_; }
  std::size_t cells() const { return cells_; }
  std::size_t p_n() const { return (std::size_t{1} << cells_) + 2; }

  const std::vector<double>& row_w() const { return w_; }
  const std::vector<double>& row_wy() const { return wy_; }
  const std::vector<std::size_t>& row_cell() const { return cell_; }
  const std::vector<double>& cell_w() const { return cell_w_; }
  double swy() const { return swy_; }

  /// h_j-weighted sums Sum_c h_j[c] a_c for every enumerated sign function j,
  /// using the subset-sum recursion over the bit-mapped cells.
  std::vector<double> subset_dots(const std::vector<double>& cell_values) const {
    double total = 0;
    for (double a : cell_values) total += a;
    std::vector<double> arr(cells_);
    for (std::size_t k = 0; k < cells_; ++k)
      arr[k] = cell_values[cells_ - 1 - k];  // bit k of j addresses cell C-1-k
    const std::size_t m = std::size_t{1} << cells_;
    std::vector<double> dot(m);
    dot[0] = -0.5 * total;
    for (std::size_t j = 1; j < m; ++j)
      dot[j] = dot[j & (j - 1)] + arr[std::countr_zero(j)];
    return dot;
  }

  MomentStats stats(double theta) const {
    const double s = sgn(theta);
    const double at = std::fabs(theta);
    const double nn = static_cast<double>(n_);
    MomentStats st;
    st.p_n = p_n();
    st.m.resize(st.p_n);
    st.sd.resize(st.p_n);
    st.degenerate.assign(st.p_n, 0);

    const double m1 = -s * swy_ / nn;
    const double eg2_12 = sw2y2_ / nn;
    st.m[0] = m1;
    st.m[1] = -m1 - at;
    const double var12 = clamp_var(eg2_12 - m1 * m1, eg2_12);
    st.sd[0] = st.sd[1] = std::sqrt(var12);
    st.degenerate[0] = st.degenerate[1] = var12 == 0.0;

    const std::size_t nh = std::size_t{1} << cells_;
    for (std::size_t j = 0; j < nh; ++j) {
      const double m = (at * u_[j] - s * swy_) / nn;
      const double eg2 = (0.25 * theta * theta * sw2_ - 2.0 * theta * v_[j] + sw2y2_) / nn;
      const double var = clamp_var(eg2 - m * m, eg2);
      st.m[2 + j] = m;
      st.sd[2 + j] = std::sqrt(var);
      st.degenerate[2 + j] = var == 0.0;
    }
    return st;
  }

  /// Studentized max statistic T(theta, pi) = max_j sqrt(n) m_j / sd_j.
  /// Degenerate moments with nonpositive mean are dropped (they cannot
  /// reject); a degenerate moment with positive mean forces rejection.
  double statistic(double theta) const {
    const MomentStats st = stats(theta);
    return statistic_from(st);
  }

  double statistic_from(const MomentStats& st) const {
    const double rn = std::sqrt(static_cast<double>(n_));
    double best = -std::numeric_limits<double>::infinity();
    std::size_t alive = 0;
    for (std::size_t j = 0; j < st.p_n; ++j) {
      if (st.degenerate[j]) {
        if (st.m[j] > 0.0) return std::numeric_limits<double>::infinity();
        continue;
      }
      ++alive;
      best = std::max(best, rn * st.m[j] / st.sd[j]);
    }
    if (alive == 0) throw ValidationError("all moments degenerate");
    return best;
  }

 private:
  static double clamp_var(double var, double eg2) {
    // guards the one-pass variance against cancellation noise near zero
    if (!(var > 1e-10 * std::max(eg2, 1e-300))) return 0.0;
    return var;
  }

  std::size_t n_;
  std::size_t cells_;
  std::vector<double> w_, wy_;
  std::vector<std::size_t> cell_;
  std::vector<double> cell_w_, cell_w2y_;
  double swy_ = 0, sw2_ = 0, sw2y2_ = 0;
  std::vector<double> u_, v_;
};

}  // namespace tvlate
