#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tvlate/data.hpp"
#include "tvlate/rng.hpp"
#include "tvlate/util.hpp"

namespace tvlate {

/// Linear probability model pi(V) = V'beta with fitted values clipped to
/// [eta, 1-eta]. Tables without covariates use the implicit constant design,
/// so beta has a single intercept entry.
struct PropensityModel {
  std::vector<double> beta;
  double eta = 0.01;
  std::vector<double> fitted;
  bool ridge_used = false;
};

namespace detail {

/// Cholesky solve of the d x d normal equations; returns false when the
/// matrix is not (numerically) positive definite.
inline bool chol_solve(std::vector<double> a, std::vector<double> b,
                       std::size_t d, std::vector<double>& out) {
  for (std::size_t j = 0; j < d; ++j) {
    double diag = a[j * d + j];
    for (std::size_t k = 0; k < j; ++k) diag -= a[j * d + k] * a[j * d + k];
    if (!(diag > 1e-12 * std::max(1.0, a[j * d + j]))) return false;
    const double l = std::sqrt(diag);
    a[j * d + j] = l;
    for (std::size_t i = j + 1; i < d; ++i) {
      double s = a[i * d + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * d + k] * a[j * d + k];
      a[i * d + j] = s / l;
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * d + k] * b[k];
    b[i] = s / a[i * d + i];
  }
  for (std::size_t ii = d; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < d; ++k) s -= a[k * d + ii] * b[k];
    b[ii] = s / a[ii * d + ii];
  }
  out = std::move(b);
  return true;
}

/// OLS of z on the design (implicit constant when the table has no
/// covariates); optionally over a bootstrap index set.
inline std::vector<double> lpm_beta(const ObservationTable& tab,
                                    const std::vector<std::size_t>* idx,
                                    bool& ridge_used) {
  const std::size_t d = tab.has_v() ? tab.d : 1;
  const std::size_t n = idx ? idx->size() : tab.n;
  std::vector<double> xtx(d * d, 0.0), xtz(d, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = idx ? (*idx)[k] : k;
    const double* row = tab.has_v() ? &tab.v[i * tab.d] : nullptr;
    auto xj = [&](std::size_t j) { return row ? row[j] : 1.0; };
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a; b < d; ++b) xtx[a * d + b] += xj(a) * xj(b);
      xtz[a] += xj(a) * tab.z[i];
    }
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < a; ++b) xtx[a * d + b] = xtx[b * d + a];

  std::vector<double> beta;
  if (chol_solve(xtx, xtz, d, beta)) return beta;
  // ridge fallback for near-singular designs
  double trace = 0;
  for (std::size_t a = 0; a < d; ++a) trace += xtx[a * d + a];
  const double pen = 1e-8 * std::max(1.0, trace / static_cast<double>(d));
  for (std::size_t a = 0; a < d; ++a) xtx[a * d + a] += pen;
  if (!chol_solve(xtx, xtz, d, beta))
    throw ValidationError("rank-deficient covariate design");
  ridge_used = true;
  return beta;
}

}  // namespace detail

inline PropensityModel fit_lpm(const ObservationTable& tab, double eta = 0.01) {
  if (!(eta > 0.0 && eta < 0.5)) throw ValidationError("eta must lie in (0, 0.5)");
  PropensityModel m;
  m.eta = eta;
  m.beta = detail::lpm_beta(tab, nullptr, m.ridge_used);
  m.fitted.resize(tab.n);
  const std::size_t d = tab.has_v() ? tab.d : 1;
  for (std::size_t i = 0; i < tab.n; ++i) {
    double f = 0;
    for (std::size_t j = 0; j < d; ++j)
      f += m.beta[j] * (tab.has_v() ? tab.v_at(i, j) : 1.0);
    m.fitted[i] = std::clamp(f, eta, 1.0 - eta);
  }
  return m;
}

/// Propensity fixed at a known constant (the Monte Carlo design holds
/// pi = 0.5).
inline PropensityModel known_propensity(const ObservationTable& tab, double pi0,
                                        double eta = 0.01) {
  if (!(pi0 > 0.0 && pi0 < 1.0)) throw ValidationError("pi must lie in (0,1)");
  PropensityModel m;
  m.eta = eta;
  m.beta = {pi0};
  m.fitted.assign(tab.n, std::clamp(pi0, eta, 1.0 - eta));
  return m;
}

/// Finite candidate set standing in for the (1-delta) nuisance confidence
/// region; always contains the center fit at index 0.
struct PropensityCandidateSet {
  std::vector<PropensityModel> candidates;
  double delta = 0.01;
};

/// Nonparametric-bootstrap region for beta: draws whose studentized
/// max-coordinate deviation from the center fit is within the (1-delta)
/// bootstrap quantile are retained, then thinned to the center plus the
/// per-coordinate extremes (at most 2d+1 candidates by default).
inline PropensityCandidateSet propensity_region(const ObservationTable& tab,
                                                double delta, int b_reps,
                                                int m_candidates,
                                                std::uint64_t seed,
                                                double eta = 0.01) {
  if (!(delta > 0.0 && delta < 0.5)) throw ValidationError("delta must lie in (0, 0.5)");
  if (b_reps < 100) throw ValidationError("propensity region needs b_reps >= 100");
  const PropensityModel center = fit_lpm(tab, eta);
  const std::size_t d = center.beta.size();
  if (m_candidates < 1) m_candidates = static_cast<int>(2 * d + 1);

  CounterRng root(seed);
  std::vector<std::vector<double>> draws(b_reps);
  for (int b = 0; b < b_reps; ++b) {
    CounterRng rng = root.fork(static_cast<std::uint64_t>(b));
    std::vector<std::size_t> idx(tab.n);
    for (std::size_t i = 0; i < tab.n; ++i)
      idx[i] = std::min<std::size_t>(
          tab.n - 1, static_cast<std::size_t>(rng.uniform01() * tab.n));
    bool ridge = false;
    draws[b] = detail::lpm_beta(tab, &idx, ridge);
  }

  std::vector<double> se(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0;
    for (const auto& b : draws) mean += b[j];
    mean /= b_reps;
    double var = 0;
    for (const auto& b : draws) var += (b[j] - mean) * (b[j] - mean);
    se[j] = std::sqrt(var / b_reps);
  }
  std::vector<double> dev(b_reps, 0.0);
  for (int b = 0; b < b_reps; ++b)
    for (std::size_t j = 0; j < d; ++j)
      if (se[j] > 0)
        dev[b] = std::max(dev[b], std::fabs(draws[b][j] - center.beta[j]) / se[j]);
  const double cut = quantile_higher(dev, 1.0 - delta);

  auto model_from = [&](const std::vector<double>& beta) {
    PropensityModel m;
    m.eta = eta;
    m.beta = beta;
    m.ridge_used = center.ridge_used;
    m.fitted.resize(tab.n);
    for (std::size_t i = 0; i < tab.n; ++i) {
      double f = 0;
      for (std::size_t j = 0; j < d; ++j)
        f += beta[j] * (tab.has_v() ? tab.v_at(i, j) : 1.0);
      m.fitted[i] = std::clamp(f, eta, 1.0 - eta);
    }
    return m;
  };

  PropensityCandidateSet set;
  set.delta = delta;
  set.candidates.push_back(center);
  for (std::size_t j = 0; j < d; ++j) {
    int lo = -1, hi = -1;
    for (int b = 0; b < b_reps; ++b) {
      if (dev[b] > cut) continue;
      if (lo < 0 || draws[b][j] < draws[lo][j]) lo = b;
      if (hi < 0 || draws[b][j] > draws[hi][j]) hi = b;
    }
    for (int pick : {lo, hi}) {
      if (pick < 0) continue;
      bool dup = false;
      for (const auto& c : set.candidates)
        if (c.beta == draws[pick]) dup = true;
      if (!dup) set.candidates.push_back(model_from(draws[pick]));
    }
  }
  if (static_cast<int>(set.candidates.size()) > m_candidates)
    set.candidates.resize(m_candidates);
  return set;
}

}  // namespace tvlate
