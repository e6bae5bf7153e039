#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "tvlate/data.hpp"
#include "tvlate/moments.hpp"
#include "tvlate/parallel.hpp"
#include "tvlate/partition.hpp"
#include "tvlate/propensity.hpp"
#include "tvlate/util.hpp"

namespace tvlate {

struct TestResult {
  double theta = 0;
  double statistic = 0;
  double critical = 0;
  bool reject = false;
  std::size_t p_n_effective = 0;
};

/// Multiplier draws reduced to theta-free aggregates. Replicate b uses
/// epsilon_i ~ N(0,1) from stream rng.fork(b), consumed in row order, so the
/// same (seed, B) always produces the same draws regardless of the theta
/// grid or candidate propensity they are later combined with.
class MultiplierDraws {
 public:
  MultiplierDraws(const MomentSystem& sys, int b_reps, CounterRng rng)
      : b_(b_reps), cells_(sys.cells()) {
    const auto& w = sys.row_w();
    const auto& wy = sys.row_wy();
    const auto& cell = sys.row_cell();
    const auto& cw = sys.cell_w();
    const double n = static_cast<double>(sys.n());
    const double swy_n = sys.swy() / n;
    fwy_.assign(b_, 0.0);
    gcell_.assign(static_cast<std::size_t>(b_) * cells_, 0.0);
    const std::size_t nh = std::size_t{1} << cells_;
    // cache the per-replicate sign-function dot products unless they would
    // dominate memory; critical_at recomputes them on the fly otherwise
    cache_dots_ = static_cast<std::size_t>(b_) * nh <= (std::size_t{1} << 23);
    if (cache_dots_) hdot_.assign(static_cast<std::size_t>(b_) * nh, 0.0);
    std::vector<double> g(cells_);
    for (int b = 0; b < b_; ++b) {
      CounterRng st = rng.fork(static_cast<std::uint64_t>(b));
      std::fill(g.begin(), g.end(), 0.0);
      double e0 = 0, f = 0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double eps = st.normal();
        e0 += eps;
        f += eps * wy[i];
        g[cell[i]] += eps * w[i];
      }
      // center: sums of eps*(x - mean(x)) for x = w*y and the per-cell w
      fwy_[b] = f - swy_n * e0;
      for (std::size_t c = 0; c < cells_; ++c) {
        g[c] -= cw[c] / n * e0;
        gcell_[static_cast<std::size_t>(b) * cells_ + c] = g[c];
      }
      if (cache_dots_) {
        const auto dots = sys.subset_dots(g);
        std::copy(dots.begin(), dots.end(),
                  hdot_.begin() + static_cast<std::size_t>(b) * nh);
      }
    }
  }

  int b_reps() const { return b_; }

  /// Conditional (1-alpha) quantile of the bootstrap max statistic at theta.
  /// Moments flagged inactive (degenerate or deselected) are skipped.
  double critical_at(const MomentSystem& sys, const MomentStats& st,
                     double alpha, const std::vector<std::uint8_t>& active,
                     double theta) const {
    const double n = static_cast<double>(sys.n());
    const double rn = std::sqrt(n);
    const double s = sgn(theta);
    const double at = std::fabs(theta);
    const std::size_t nh = std::size_t{1} << cells_;
    std::vector<double> tb(b_);
    std::vector<double> scratch, cellbuf(cells_);
    for (int b = 0; b < b_; ++b) {
      const double* dots;
      if (cache_dots_) {
        dots = hdot_.data() + static_cast<std::size_t>(b) * nh;
      } else {
        std::copy(gcell_.begin() + static_cast<std::size_t>(b) * cells_,
                  gcell_.begin() + static_cast<std::size_t>(b + 1) * cells_,
                  cellbuf.begin());
        scratch = sys.subset_dots(cellbuf);
        dots = scratch.data();
      }
      const double f = fwy_[b];
      double best = -std::numeric_limits<double>::infinity();
      if (active[0]) best = std::max(best, -s * f / n / st.sd[0]);
      if (active[1]) best = std::max(best, s * f / n / st.sd[1]);
      for (std::size_t j = 0; j < nh; ++j) {
        if (!active[2 + j]) continue;
        const double mb = (at * dots[j] - s * f) / n;
        best = std::max(best, mb / st.sd[2 + j]);
      }
      tb[b] = rn * best;
    }
    return quantile_higher(std::move(tb), 1.0 - alpha);
  }

 private:
  int b_;
  std::size_t cells_;
  bool cache_dots_ = true;
  std::vector<double> fwy_;
  std::vector<double> gcell_;
  std::vector<double> hdot_;
};

namespace detail {

/// Active = not degenerate, and retained by the optional pre-selection
/// (drop j when sqrt(n) m_j/sd_j < -2 sqrt(2 log(p_n/beta))). Degenerate
/// moments with positive mean force rejection and are handled by the caller
/// through MomentSystem::statistic_from.
inline std::vector<std::uint8_t> active_moments(const MomentSystem& sys,
                                                const MomentStats& st,
                                                double selection_beta) {
  std::vector<std::uint8_t> active(st.p_n, 1);
  for (std::size_t j = 0; j < st.p_n; ++j)
    if (st.degenerate[j]) active[j] = 0;
  if (selection_beta > 0.0) {
    const double rn = std::sqrt(static_cast<double>(sys.n()));
    const double thr =
        -2.0 * std::sqrt(2.0 * std::log(static_cast<double>(st.p_n) / selection_beta));
    for (std::size_t j = 0; j < st.p_n; ++j)
      if (active[j] && rn * st.m[j] / st.sd[j] < thr) active[j] = 0;
  }
  return active;
}

}  // namespace detail

/// Studentized max statistic T(theta, pi).
inline double test_statistic(const ObservationTable& tab, double theta,
                             const PropensityModel& pi,
                             const CellPartition& part) {
  return MomentSystem(tab, part, pi).statistic(theta);
}

/// Multiplier-bootstrap critical value: the empirical (1-alpha) quantile
/// (higher interpolation) of B bootstrap max statistics.
inline double bootstrap_critical(const ObservationTable& tab, double theta,
                                 const PropensityModel& pi,
                                 const CellPartition& part, double alpha,
                                 int b_reps, std::uint64_t seed,
                                 double selection_beta = 0.0) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw ValidationError("alpha must lie in (0, 0.5)");
  if (b_reps < 200) throw ValidationError("bootstrap needs b_reps >= 200");
  MomentSystem sys(tab, part, pi);
  MultiplierDraws draws(sys, b_reps, CounterRng(seed));
  const MomentStats st = sys.stats(theta);
  const auto active = detail::active_moments(sys, st, selection_beta);
  const double a = selection_beta > 0.0 ? alpha - 2.0 * selection_beta : alpha;
  return draws.critical_at(sys, st, std::max(a, 1e-6), active, theta);
}

inline TestResult moment_test(const MomentSystem& sys, const MultiplierDraws& draws,
                              double theta, double alpha,
                              double selection_beta = 0.0) {
  const MomentStats st = sys.stats(theta);
  const auto active = detail::active_moments(sys, st, selection_beta);
  TestResult res;
  res.theta = theta;
  res.statistic = sys.statistic_from(st);
  const double a = selection_beta > 0.0 ? alpha - 2.0 * selection_beta : alpha;
  res.critical = draws.critical_at(sys, st, std::max(a, 1e-6), active, theta);
  res.reject = res.statistic > res.critical;
  res.p_n_effective = 0;
  for (auto v : active) res.p_n_effective += v;
  return res;
}

struct ConfidenceInterval {
  double alpha = 0.05;
  double delta = 0.0;
  std::vector<double> grid;
  std::vector<std::uint8_t> accepted;
  double lo = 0, hi = 0;
  bool unbounded_above = false;
  bool empty = false;
  double closest_theta = 0;  // reported when the acceptance set is empty
  int b_reps = 0;
  std::uint64_t seed = 0;
};

/// Test inversion over an equally spaced theta grid, unioned over the
/// candidate propensities: theta is accepted if any candidate accepts it.
/// One multiplier stream (seeded once) is shared across every grid point and
/// candidate, so the whole object is reproducible bit for bit.
inline ConfidenceInterval confidence_interval(
    const ObservationTable& tab, const CellPartition& part,
    const PropensityCandidateSet& candidates, const ParameterSpace& theta_space,
    double alpha, int grid_points, int b_reps, std::uint64_t seed,
    double selection_beta = 0.0, int threads = 1) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw ValidationError("alpha must lie in (0, 0.5)");
  if (b_reps < 200) throw ValidationError("bootstrap needs b_reps >= 200");
  if (grid_points < 1) throw ValidationError("grid needs at least one point");
  if (candidates.candidates.empty()) throw ValidationError("empty candidate set");
  validate_parameter_space(theta_space);

  ConfidenceInterval ci;
  ci.alpha = alpha;
  ci.delta = candidates.delta;
  ci.b_reps = b_reps;
  ci.seed = seed;
  ci.grid.resize(grid_points);
  for (int g = 0; g < grid_points; ++g)
    ci.grid[g] = grid_points == 1
                     ? 0.5 * (theta_space.lo + theta_space.hi)
                     : theta_space.lo + (theta_space.hi - theta_space.lo) * g /
                           (grid_points - 1);
  ci.accepted.assign(grid_points, 0);

  const std::size_t nc = candidates.candidates.size();
  std::vector<MomentSystem> systems;
  std::vector<MultiplierDraws> draws;
  systems.reserve(nc);
  draws.reserve(nc);
  for (const auto& cand : candidates.candidates) {
    systems.emplace_back(tab, part, cand);
    draws.emplace_back(systems.back(), b_reps, CounterRng(seed));
  }

  std::vector<double> gap(grid_points, std::numeric_limits<double>::infinity());
  parallel_for(static_cast<std::size_t>(grid_points), threads, [&](std::size_t g) {
    const double theta = ci.grid[g];
    for (std::size_t c = 0; c < nc; ++c) {
      const TestResult res =
          moment_test(systems[c], draws[c], theta, alpha, selection_beta);
      gap[g] = std::min(gap[g], res.statistic - res.critical);
      if (!res.reject) {
        ci.accepted[g] = 1;
        break;
      }
    }
  });

  double lo = std::numeric_limits<double>::quiet_NaN(), hi = lo;
  for (int g = 0; g < grid_points; ++g) {
    if (!ci.accepted[g]) continue;
    if (std::isnan(lo)) lo = ci.grid[g];
    hi = ci.grid[g];
  }
  if (std::isnan(lo)) {
    // sampling artifact: the population set is never empty
    ci.empty = true;
    int best = 0;
    for (int g = 1; g < grid_points; ++g)
      if (gap[g] < gap[best]) best = g;
    ci.closest_theta = ci.grid[best];
    ci.lo = ci.hi = ci.grid[best];
  } else {
    ci.lo = lo;
    ci.hi = hi;
    ci.unbounded_above = ci.accepted.back() != 0;
  }
  return ci;
}

}  // namespace tvlate
