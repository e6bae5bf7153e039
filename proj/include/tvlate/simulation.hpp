#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tvlate/data.hpp"
#include "tvlate/identified_set.hpp"
#include "tvlate/inference.hpp"
#include "tvlate/parallel.hpp"
#include "tvlate/partition.hpp"
#include "tvlate/propensity.hpp"
#include "tvlate/rng.hpp"

namespace tvlate {

/// Monte Carlo design:
///   Z  ~ Bernoulli(0.5)
///   T* = 1{-3/4 + Z/2 + U1 >= 0}
///   Y  = 2 T* + N2             (N2 the copula's latent normal, coordinate 2)
///   T  = T* + (1 - 2T*) 1{U3 <= gamma}
///   R  = T* + (1 - 2T*) 1{U4 <= gamma}   (when with_r)
/// with (U1,..,Ud) Gaussian-copula uniforms. gamma in [0,1) is the
/// misclassification rate, rho the printed off-diagonal of the design's
/// correlation matrix (see dgp_mixing_correlation for how it enters).
struct DgpConfig {
  double gamma = 0.0;
  double rho = 0.25;
  bool with_r = false;
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

inline void validate_dgp(const DgpConfig& cfg) {
  const int dim = cfg.with_r ? 4 : 3;
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0))
    throw ValidationError("gamma must lie in [0, 1)");
  if (!(cfg.rho > -1.0 / (dim - 1) && cfg.rho < 1.0))
    throw ValidationError("equicorrelation must satisfy -1/(dim-1) < rho < 1");
  if (cfg.n < 2) throw ValidationError("n must be >= 2");
}

/// The design's tables are reproduced when the printed equicorrelation
/// matrix C(rho) acts as the mixing matrix itself (X = C N, standardized),
/// which is a Gaussian copula with effective correlation
/// (2 rho + (d-2) rho^2) / (1 + (d-1) rho^2): 0.5 at rho=0.25, d=3.
inline double dgp_mixing_correlation(double rho, int dim) {
  return (2.0 * rho + (dim - 2) * rho * rho) / (1.0 + (dim - 1) * rho * rho);
}

namespace detail {

/// Correlated standard normals from the closed-form square root of the
/// equicorrelation matrix: A = sqrt(1-r) I + ((sqrt(1+(d-1)r)-sqrt(1-r))/d) J.
struct EquicorrDraw {
  double a, c;
  EquicorrDraw(double r, int d)
      : a(std::sqrt(1.0 - r)),
        c((std::sqrt(1.0 + (d - 1) * r) - std::sqrt(1.0 - r)) / d) {}
  void operator()(CounterRng& rng, int d, double* out) const {
    double s = 0;
    for (int k = 0; k < d; ++k) {
      out[k] = rng.normal();
      s += out[k];
    }
    for (int k = 0; k < d; ++k) out[k] = a * out[k] + c * s;
  }
};

}  // namespace detail

/// Row-major n x dim matrix of Gaussian-copula uniforms with the given
/// pairwise correlation (of the latent normals). Rows are i.i.d.; row i is a
/// pure function of fork(i), so any batching produces the same sample.
inline std::vector<double> gaussian_copula_sample(int dim, double rho,
                                                  std::size_t n,
                                                  std::uint64_t seed) {
  if (dim < 2 || dim > 16) throw ValidationError("copula dimension out of range");
  if (!(rho > -1.0 / (dim - 1) && rho < 1.0))
    throw ValidationError("equicorrelation must satisfy -1/(dim-1) < rho < 1");
  const detail::EquicorrDraw draw(rho, dim);
  CounterRng root(seed);
  std::vector<double> out(n * static_cast<std::size_t>(dim));
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng = root.fork(i);
    draw(rng, dim, x.data());
    for (int k = 0; k < dim; ++k)
      out[i * dim + k] = CounterRng::norm_cdf(x[k]);
  }
  return out;
}

/// Draws the table. Stream layout per row i: fork(i) yields the Z uniform
/// first, then the dim latent normals.
inline ObservationTable simulate(const DgpConfig& cfg) {
  validate_dgp(cfg);
  const int dim = cfg.with_r ? 4 : 3;
  const double re = dgp_mixing_correlation(cfg.rho, dim);
  const detail::EquicorrDraw draw(re, dim);
  CounterRng root(cfg.seed);

  std::vector<double> y(cfg.n);
  std::vector<std::uint8_t> t(cfg.n), z(cfg.n), r;
  if (cfg.with_r) r.resize(cfg.n);
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    CounterRng rng = root.fork(i);
    const std::uint8_t zi = rng.uniform01() < 0.5 ? 1 : 0;
    draw(rng, dim, x.data());
    const double u1 = CounterRng::norm_cdf(x[0]);
    const double u3 = CounterRng::norm_cdf(x[2]);
    const std::uint8_t ts = -0.75 + 0.5 * zi + u1 >= 0.0 ? 1 : 0;
    z[i] = zi;
    y[i] = 2.0 * ts + x[1];
    t[i] = u3 <= cfg.gamma ? 1 - ts : ts;
    if (cfg.with_r) {
      const double u4 = CounterRng::norm_cdf(x[3]);
      r[i] = u4 <= cfg.gamma ? 1 - ts : ts;
    }
  }
  return make_table(std::move(y), std::move(t), std::move(z), std::move(r));
}

/// Population LATE, identified-set endpoints and Wald estimand.
struct PopulationObjects {
  double late = 2.0;
  double identified_lo = 0;
  double identified_hi = 0;
  double wald = 0;
};

inline constexpr int kPopulationCells = 64;

/// Large-sample plug-in of the Table 4/5/6 population objects: equally
/// spaced 64-cell outcome partition crossed per regime. The LATE is 2 by
/// construction (constant unit effect of size 2).
inline PopulationObjects population_objects(double gamma, bool with_r,
                                            Regime regime, std::size_t n_mc,
                                            std::uint64_t seed,
                                            int k_cells = kPopulationCells) {
  if (n_mc < 100000) throw ValidationError("population objects need n_mc >= 1e5");
  if (regime == Regime::conditional)
    throw ValidationError("population objects cover the covariate-free regimes");
  if (regime == Regime::with_r && !with_r)
    throw ValidationError("with_r regime requires the 4-dimensional design");
  DgpConfig cfg;
  cfg.gamma = gamma;
  cfg.with_r = with_r;
  cfg.n = n_mc;
  cfg.seed = seed;
  const ObservationTable tab = simulate(cfg);
  const PartitionVariant variant = regime == Regime::with_r
                                       ? PartitionVariant::with_t_r
                                       : regime == Regime::no_t
                                             ? PartitionVariant::y_only
                                             : PartitionVariant::with_t;
  const CellPartition part = build_partition(tab, k_cells, variant, 0,
                                             /*equal_width=*/true,
                                             /*enforce_cap=*/false);
  PopulationObjects pop;
  pop.late = 2.0;
  const double itt_v = itt(tab);
  const double tv = tv_distance(tab, part);
  pop.identified_lo = itt_v;
  pop.identified_hi = tv > 0 ? itt_v / tv
                             : std::numeric_limits<double>::infinity();
  pop.wald = wald(tab);
  return pop;
}

struct CoverageRow {
  double theta = 0;
  double coverage = 0;
};

/// Coverage of the multiplier-bootstrap test across simulation replications,
/// with the propensity held at the known pi = 0.5. Replication r derives its
/// data stream from fork(r).fork(0) and its multiplier stream from
/// fork(r).fork(1), so results are identical under any thread count.
inline std::vector<CoverageRow> coverage_experiment(
    double gamma, Regime regime, const std::vector<double>& theta_list,
    std::size_t n, int sims, int b_reps, int k_n, double alpha,
    std::uint64_t seed, int threads = 1, double selection_beta = 0.0,
    double rho = 0.25) {
  if (regime == Regime::conditional)
    throw ValidationError("coverage experiment covers the covariate-free regimes");
  if (sims < 1 || theta_list.empty())
    throw ValidationError("coverage experiment needs sims >= 1 and thetas");
  const PartitionVariant variant = regime == Regime::with_r
                                       ? PartitionVariant::with_t_r
                                       : regime == Regime::no_t
                                             ? PartitionVariant::y_only
                                             : PartitionVariant::with_t;
  CounterRng root(seed);
  std::vector<std::uint8_t> accept(static_cast<std::size_t>(sims) * theta_list.size(), 0);
  parallel_for(static_cast<std::size_t>(sims), threads, [&](std::size_t rep) {
    CounterRng rep_rng = root.fork(rep);
    DgpConfig cfg;
    cfg.gamma = gamma;
    cfg.rho = rho;
    cfg.with_r = regime == Regime::with_r;
    cfg.n = n;
    cfg.seed = rep_rng.fork(0).seed();
    const ObservationTable tab = simulate(cfg);
    const CellPartition part =
        build_partition(tab, k_n, variant, 0, /*equal_width=*/true);
    const PropensityModel pi = known_propensity(tab, 0.5);
    const MomentSystem sys(tab, part, pi);
    const MultiplierDraws draws(sys, b_reps, rep_rng.fork(1));
    for (std::size_t k = 0; k < theta_list.size(); ++k) {
      const TestResult res =
          moment_test(sys, draws, theta_list[k], alpha, selection_beta);
      accept[rep * theta_list.size() + k] = res.reject ? 0 : 1;
    }
  });
  std::vector<CoverageRow> rows(theta_list.size());
  for (std::size_t k = 0; k < theta_list.size(); ++k) {
    rows[k].theta = theta_list[k];
    double s = 0;
    for (int rep = 0; rep < sims; ++rep)
      s += accept[static_cast<std::size_t>(rep) * theta_list.size() + k];
    rows[k].coverage = s / sims;
  }
  return rows;
}

}  // namespace tvlate
