#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tvlate/data.hpp"
#include "tvlate/moments.hpp"
#include "tvlate/partition.hpp"
#include "tvlate/propensity.hpp"

namespace tvlate {

enum class Regime { unconditional, conditional, with_r, no_t };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::unconditional: return "unconditional";
    case Regime::conditional: return "conditional";
    case Regime::with_r: return "with_r";
    case Regime::no_t: return "no_t";
  }
  return "?";
}

enum class SetKind { whole_space, point_zero, interval };

/// Sharp identified set for the local average treatment effect, together
/// with the plug-in estimates it is built from.
struct IdentifiedSet {
  SetKind kind = SetKind::interval;
  double lo = 0, hi = 0;
  double itt = 0;
  double tv = 0;
  std::optional<double> wald;
};

/// Intent-to-treat effect. Without a propensity model this is the exact
/// two-group mean difference; with one it is the pi-weighted version.
inline double itt(const ObservationTable& tab,
                  const PropensityModel* pi = nullptr) {
  if (pi) return weighted_delta_y(tab, *pi);
  double s1 = 0, s0 = 0, n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < tab.n; ++i) {
    if (tab.z[i]) { s1 += tab.y[i]; ++n1; }
    else          { s0 += tab.y[i]; ++n0; }
  }
  return s1 / n1 - s0 / n0;
}

inline double delta_t(const ObservationTable& tab,
                      const PropensityModel* pi = nullptr) {
  if (pi) return weighted_delta_t(tab, *pi);
  double s1 = 0, s0 = 0, n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < tab.n; ++i) {
    if (tab.z[i]) { s1 += tab.t[i]; ++n1; }
    else          { s0 += tab.t[i]; ++n0; }
  }
  return s1 / n1 - s0 / n0;
}

inline double wald(const ObservationTable& tab,
                   const PropensityModel* pi = nullptr) {
  const double den = delta_t(tab, pi);
  if (den == 0.0)
    throw ValidationError("instrument irrelevant for measured treatment");
  return itt(tab, pi) / den;
}

namespace detail {

/// Per-cell arm-conditional probabilities and arm sizes.
struct CellProbs {
  std::vector<double> p1, p0;
  double n1 = 0, n0 = 0;
};

inline CellProbs cell_probs(const ObservationTable& tab,
                            const CellPartition& part) {
  CellProbs cp;
  cp.p1.assign(part.cell_count(), 0.0);
  cp.p0.assign(part.cell_count(), 0.0);
  for (std::size_t i = 0; i < tab.n; ++i) {
    const std::size_t c = part.cell_index(tab, i);
    if (tab.z[i]) { cp.p1[c] += 1; cp.n1 += 1; }
    else          { cp.p0[c] += 1; cp.n0 += 1; }
  }
  for (auto& p : cp.p1) p /= cp.n1;
  for (auto& p : cp.p0) p /= cp.n0;
  return cp;
}

}  // namespace detail

/// Plug-in total variation distance over the partition cells. Without a
/// propensity model this is half the L1 distance between the arm-conditional
/// cell probabilities; with one it is the maximum over the sign-function
/// class of weighted_delta(h), which has the closed form half the L1 norm of
/// the per-cell weighted sums (attained at h = sgn of the cell sum).
inline double tv_distance(const ObservationTable& tab, const CellPartition& part,
                          const PropensityModel* pi = nullptr) {
  double tv = 0;
  if (pi == nullptr) {
    const auto cp = detail::cell_probs(tab, part);
    for (std::size_t c = 0; c < cp.p1.size(); ++c)
      tv += std::fabs(cp.p1[c] - cp.p0[c]);
    return 0.5 * tv;
  }
  std::vector<double> cell_w(part.cell_count(), 0.0);
  for (std::size_t i = 0; i < tab.n; ++i) {
    const double p = pi->fitted[i];
    cell_w[part.cell_index(tab, i)] += (tab.z[i] - p) / (p * (1.0 - p));
  }
  for (double a : cell_w) tv += std::fabs(a);
  return 0.5 * tv / static_cast<double>(tab.n);
}

namespace detail {

inline void check_regime_partition(const ObservationTable& tab,
                                   const CellPartition& part, Regime regime,
                                   const PropensityModel* pi) {
  switch (regime) {
    case Regime::unconditional:
      if (!part.split_by_t || part.split_by_r)
        throw ValidationError("unconditional regime expects a with_t partition");
      break;
    case Regime::conditional:
      if (!part.split_by_t || part.split_by_r)
        throw ValidationError("conditional regime expects a with_t partition");
      if (pi == nullptr)
        throw ValidationError("conditional regime requires a fitted propensity");
      break;
    case Regime::with_r:
      if (!tab.has_r()) throw ValidationError("with_r regime requires r");
      if (!part.split_by_t || !part.split_by_r)
        throw ValidationError("with_r regime expects a with_t_r partition");
      break;
    case Regime::no_t:
      if (part.split_by_t || part.split_by_r)
        throw ValidationError("no_t regime expects a y_only partition");
      break;
  }
}

}  // namespace detail

/// Sharp identified set under the chosen regime: three-branch classification
/// by the sign of the ITT, the whole parameter space when TV = 0.
inline IdentifiedSet sharp_set(const ObservationTable& tab,
                               const CellPartition& part,
                               const PropensityModel* pi,
                               const std::optional<ParameterSpace>& theta_space,
                               Regime regime) {
  detail::check_regime_partition(tab, part, regime, pi);
  IdentifiedSet set;
  set.itt = itt(tab, pi);
  set.tv = tv_distance(tab, part, pi);
  const double den = delta_t(tab, pi);
  if (den != 0.0) set.wald = set.itt / den;

  if (set.tv == 0.0) {
    if (!theta_space)
      throw ValidationError("TV = 0: the identified set is the whole parameter "
                            "space, supply theta bounds");
    validate_parameter_space(*theta_space);
    set.kind = SetKind::whole_space;
    set.lo = theta_space->lo;
    set.hi = theta_space->hi;
    return set;
  }
  if (set.itt == 0.0) {
    set.kind = SetKind::point_zero;
    set.lo = set.hi = 0.0;
    return set;
  }
  set.kind = SetKind::interval;
  if (set.itt > 0) {
    set.lo = set.itt;
    set.hi = set.itt / set.tv;
  } else {
    set.lo = set.itt / set.tv;
    set.hi = set.itt;
  }
  return set;
}

// ---------------------------------------------------------------------------
// Wald validity: condition f_{(Y,T)|Z=1}(y,1) >= f_{(Y,T)|Z=0}(y,1) and
// f_{(Y,T)|Z=1}(y,0) <= f_{(Y,T)|Z=0}(y,0), checked cell-wise.
// ---------------------------------------------------------------------------

struct WaldValidity {
  bool holds = true;
  std::vector<std::size_t> violating_cells;  // y-cell indices
};

/// tau_mult = 0 gives the tolerance-zero mode for exact discrete fixtures;
/// the default 2 allows a two-standard-error band per cell.
inline WaldValidity wald_validity_check(const ObservationTable& tab,
                                        const CellPartition& part,
                                        double tau_mult = 2.0) {
  if (!part.split_by_t || part.split_by_r || !part.v_edges.empty())
    throw ValidationError("validity check expects a with_t partition over (Y,T)");
  const auto cp = detail::cell_probs(tab, part);
  const double n_arm = std::min(cp.n1, cp.n0);
  WaldValidity out;
  for (std::size_t yc = 0; yc < part.y_cells(); ++yc) {
    const std::size_t c0 = yc * 2, c1 = yc * 2 + 1;
    auto tol = [&](std::size_t c) {
      const double pooled = (cp.p1[c] * cp.n1 + cp.p0[c] * cp.n0) / (cp.n1 + cp.n0);
      return tau_mult * std::sqrt(std::max(0.0, pooled * (1.0 - pooled)) / n_arm);
    };
    const bool bad1 = cp.p1[c1] - cp.p0[c1] < -tol(c1);
    const bool bad0 = cp.p1[c0] - cp.p0[c0] > tol(c0);
    if (bad1 || bad0) {
      out.holds = false;
      out.violating_cells.push_back(yc);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exogenous measurement error (Assumptions 1 + 3): identified sets for the
// misclassification odds omega_1 = p1/(1-p0-p1) and for theta.
// ---------------------------------------------------------------------------

struct ExogenousMeSet {
  // bounds for omega_1 = p1/(1-p0-p1), the false-negative odds
  double omega_lo = 0;
  double omega_hi = std::numeric_limits<double>::infinity();
  // companion bounds for omega_0 = p0/(1-p0-p1), the false-positive odds
  double omega0_lo = 0;
  double omega0_hi = std::numeric_limits<double>::infinity();
  bool feasible = true;  // false when sup > inf (assumptions rejected)
  double theta_lo = 0, theta_hi = 0;
  bool theta_unbounded = false;
  std::vector<std::size_t> violating_cells;
};

/// Cell-level exogeneity bounds. Per outcome cell, with a_tz the (Y,T)-cell
/// probability given Z=z and DD = Delta f(y,1) - Delta f(y,0) (nonnegative
/// under the maintained assumptions):
///   omega_1 >= [-Delta f(y,1)]_+ / DD      (a falling treated cell forces
///                                           false negatives)
///   omega_1 <= a_10 / [a_00 - a_10]_+      (with c/0 = +infinity)
/// and symmetrically for omega_0 from the untreated cells. The theta set
/// uses Delta E[T*|Z] = Delta E[T|Z] / (1 - p0 - p1), i.e.
///   theta = ITT / (Delta E[T|Z] (1 + omega_0 + omega_1)),
/// monotone in omega_0 + omega_1.
inline ExogenousMeSet exogenous_me_set(const ObservationTable& tab,
                                       const CellPartition& part,
                                       double tau_mult = 0.0) {
  if (!part.split_by_t || part.split_by_r || !part.v_edges.empty())
    throw ValidationError("exogeneity bounds expect a with_t partition over (Y,T)");
  const auto cp = detail::cell_probs(tab, part);
  const double n_arm = std::min(cp.n1, cp.n0);
  ExogenousMeSet out;
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t yc = 0; yc < part.y_cells(); ++yc) {
    const std::size_t c0 = yc * 2, c1 = yc * 2 + 1;
    const double a00 = cp.p0[c0], a01 = cp.p1[c0];
    const double a10 = cp.p0[c1], a11 = cp.p1[c1];
    const double d1 = a11 - a10, d0 = a01 - a00;
    const double dd = d1 - d0;
    const double pooled = ((a11 + a01) * cp.n1 + (a10 + a00) * cp.n0) / (cp.n1 + cp.n0);
    const double tau =
        tau_mult * std::sqrt(std::max(0.0, pooled * (1.0 - pooled)) / n_arm);
    if (dd > tau) {
      if (-d1 > 0) out.omega_lo = std::max(out.omega_lo, -d1 / dd);
      if (d0 > 0) out.omega0_lo = std::max(out.omega0_lo, d0 / dd);
    } else if (-d1 > tau || d0 > tau) {
      // DD <= 0 alongside a falling treated (or rising untreated) cell
      // cannot be rationalized by any misclassification rates
      out.feasible = false;
      out.violating_cells.push_back(yc);
    }
    const double den1 = a00 - a10;
    if (den1 > tau) out.omega_hi = std::min(out.omega_hi, std::max(0.0, a10) / den1);
    const double den0 = a11 - a01;
    if (den0 > tau)
      out.omega0_hi = std::min(out.omega0_hi, std::max(0.0, a01) / den0);
  }
  if (out.omega_lo > out.omega_hi || out.omega0_lo > out.omega0_hi)
    out.feasible = false;
  if (!out.feasible) return out;

  const double itt_v = itt(tab);
  const double dt = delta_t(tab);
  if (dt == 0.0) {
    out.theta_unbounded = true;
    out.theta_lo = -inf;
    out.theta_hi = inf;
    return out;
  }
  const double s_lo = out.omega_lo + out.omega0_lo;
  const double s_hi = out.omega_hi + out.omega0_hi;
  const double th_a = itt_v / (dt * (1.0 + s_lo));
  const double th_b = std::isinf(s_hi) ? 0.0 : itt_v / (dt * (1.0 + s_hi));
  out.theta_lo = std::min(th_a, th_b);
  out.theta_hi = std::max(th_a, th_b);
  return out;
}

}  // namespace tvlate
