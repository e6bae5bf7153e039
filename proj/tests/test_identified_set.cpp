#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tvlate/identified_set.hpp"
#include "tvlate/rng.hpp"

using namespace tvlate;

namespace {

ObservationTable rand_table(std::size_t n, std::uint64_t seed, double flip = 0.2,
                            bool with_r = false) {
  CounterRng rng(seed);
  std::vector<double> y(n);
  std::vector<std::uint8_t> t(n), z(n), r;
  if (with_r) r.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = rng.uniform01() < 0.5;
    const std::uint8_t ts = rng.uniform01() < (z[i] ? 0.7 : 0.3);
    y[i] = 1.5 * ts + rng.normal();
    t[i] = rng.uniform01() < flip ? 1 - ts : ts;
    if (with_r) r[i] = rng.uniform01() < flip ? 1 - ts : ts;
  }
  z[0] = 0;
  z[1] = 1;
  return make_table(std::move(y), std::move(t), std::move(z), std::move(r));
}

}  // namespace

TEST_CASE("binary outcome example: 0.8 vs 0.3 gives TV one half") {
  // 10 obs per arm; y=1 for 8 of the z=1 arm and 3 of the z=0 arm
  std::vector<double> y;
  std::vector<std::uint8_t> t, z;
  for (int i = 0; i < 10; ++i) {
    y.push_back(i < 8 ? 1.0 : 0.0);
    t.push_back(0);
    z.push_back(1);
  }
  for (int i = 0; i < 10; ++i) {
    y.push_back(i < 3 ? 1.0 : 0.0);
    t.push_back(0);
    z.push_back(0);
  }
  auto tab = make_table(std::move(y), std::move(t), std::move(z));
  const auto part = build_partition(tab, 2, PartitionVariant::y_only);
  REQUIRE(tv_distance(tab, part) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("identical arms give TV zero and the whole-space branch") {
  std::vector<double> y{1, 2, 3, 1, 2, 3};
  std::vector<std::uint8_t> t{0, 1, 0, 0, 1, 0}, z{0, 0, 0, 1, 1, 1};
  auto tab = make_table(std::move(y), std::move(t), std::move(z));
  const auto part = build_partition(tab, 2, PartitionVariant::with_t);
  REQUIRE(tv_distance(tab, part) == 0.0);
  REQUIRE_THROWS_AS(
      sharp_set(tab, part, nullptr, std::nullopt, Regime::unconditional),
      ValidationError);
  const auto set = sharp_set(tab, part, nullptr, ParameterSpace{-5, 5},
                             Regime::unconditional);
  REQUIRE(set.kind == SetKind::whole_space);
  REQUIRE(set.lo == -5.0);
  REQUIRE(set.hi == 5.0);
}

TEST_CASE("zero ITT with positive TV is the point-zero branch") {
  // outcome symmetric across arms, treatment distribution not
  std::vector<double> y{1, 2, 1, 2, 1, 2, 1, 2};
  std::vector<std::uint8_t> t{0, 0, 0, 0, 1, 1, 1, 1}, z{0, 0, 1, 1, 0, 0, 1, 1};
  // swap t so that arm 1 has more treated: rows with z=1 get t=1
  t = {0, 0, 1, 1, 0, 0, 1, 1};
  auto tab = make_table(std::move(y), std::move(t), std::move(z));
  const auto part = build_partition(tab, 1, PartitionVariant::with_t);
  const auto set = sharp_set(tab, part, nullptr, std::nullopt,
                             Regime::unconditional);
  REQUIRE(set.itt == 0.0);
  REQUIRE(set.tv > 0.0);
  REQUIRE(set.kind == SetKind::point_zero);
  REQUIRE(set.lo == 0.0);
  REQUIRE(set.hi == 0.0);
}

TEST_CASE("interval branch endpoints follow the sign of the ITT") {
  const auto tab = rand_table(4000, 3);
  const auto part = build_partition(tab, 4, PartitionVariant::with_t);
  const auto set = sharp_set(tab, part, nullptr, std::nullopt,
                             Regime::unconditional);
  REQUIRE(set.kind == SetKind::interval);
  REQUIRE(set.itt > 0);
  REQUIRE(set.lo == Catch::Approx(set.itt));
  REQUIRE(set.hi == Catch::Approx(set.itt / set.tv));
  REQUIRE(set.lo <= set.hi);

  // flipping the outcome sign mirrors the interval
  std::vector<double> yneg(tab.n);
  for (std::size_t i = 0; i < tab.n; ++i) yneg[i] = -tab.y[i];
  const auto tneg = make_table(yneg, tab.t, tab.z);
  const auto pneg = build_partition(tneg, 4, PartitionVariant::with_t);
  const auto sneg = sharp_set(tneg, pneg, nullptr, std::nullopt,
                              Regime::unconditional);
  REQUIRE(sneg.lo == Catch::Approx(-set.hi));
  REQUIRE(sneg.hi == Catch::Approx(-set.lo));
}

TEST_CASE("tv agrees between the cell formula and the weighted form") {
  const auto tab = rand_table(1500, 5);
  const auto pi = known_propensity(tab, tab.z_mean());
  for (int kn : {1, 2, 4}) {
    const auto part = build_partition(tab, kn, PartitionVariant::with_t);
    REQUIRE(tv_distance(tab, part) ==
            Catch::Approx(tv_distance(tab, part, &pi)).margin(1e-12));
  }
}

TEST_CASE("refinement weakly increases tv and shrinks the upper bound") {
  for (std::uint64_t seed : {8u, 9u, 10u}) {
    const auto tab = rand_table(800, seed);
    double prev_tv = -1.0, prev_hi = 1e300;
    for (int kn : {1, 2, 4, 8}) {
      const auto part = build_partition(tab, kn, PartitionVariant::with_t);
      const auto set = sharp_set(tab, part, nullptr, std::nullopt,
                                 Regime::unconditional);
      REQUIRE(set.tv >= prev_tv - 1e-12);
      REQUIRE(std::fabs(set.hi) <= std::fabs(prev_hi) + 1e-12);
      REQUIRE(set.lo == Catch::Approx(set.itt));
      prev_tv = set.tv;
      prev_hi = set.hi;
    }
  }
}

TEST_CASE("tv chain: y-only <= (y,t) <= (r,y,t), and tv bounds delta t") {
  const auto tab = rand_table(2000, 12, 0.25, true);
  const auto py = build_partition(tab, 4, PartitionVariant::y_only);
  const auto pyt = build_partition(tab, 4, PartitionVariant::with_t);
  const auto pytr = build_partition(tab, 4, PartitionVariant::with_t_r);
  const double tvy = tv_distance(tab, py);
  const double tvyt = tv_distance(tab, pyt);
  const double tvytr = tv_distance(tab, pytr);
  REQUIRE(tvy <= tvyt + 1e-12);
  REQUIRE(tvyt <= tvytr + 1e-12);
  REQUIRE(tvyt >= std::fabs(delta_t(tab)) - 1e-12);
  REQUIRE(tvy >= 0.0);
  REQUIRE(tvytr <= 1.0);
}

TEST_CASE("wald validity holds when t = z and flags crafted violations") {
  std::vector<double> y{1, 2, 3, 4, 1, 2, 3, 4};
  std::vector<std::uint8_t> z{1, 1, 1, 1, 0, 0, 0, 0};
  auto tab = make_table(y, z, z);  // t = z
  const auto part = build_partition(tab, 2, PartitionVariant::with_t);
  REQUIRE(wald_validity_check(tab, part, 0.0).holds);

  // a (y,t=1) cell losing mass when z=1 violates the first inequality
  std::vector<std::uint8_t> t2{1, 1, 0, 0, 0, 0, 1, 1};
  auto bad = make_table(y, t2, z);
  const auto part2 = build_partition(bad, 2, PartitionVariant::with_t);
  const auto check = wald_validity_check(bad, part2, 0.0);
  REQUIRE_FALSE(check.holds);
  REQUIRE_FALSE(check.violating_cells.empty());
}

TEST_CASE("wald lies in the sharp set exactly when validity holds") {
  int agree = 0, total = 0;
  for (std::uint64_t seed = 100; seed < 140; ++seed) {
    // small discrete tables: y in {0,1,2}, exact cell arithmetic
    CounterRng rng(seed);
    const std::size_t n = 40;
    std::vector<double> y(n);
    std::vector<std::uint8_t> t(n), z(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = std::floor(rng.uniform01() * 3);
      t[i] = rng.uniform01() < 0.5;
      z[i] = i % 2;
    }
    auto tab = make_table(std::move(y), std::move(t), std::move(z));
    const auto part = build_partition(tab, 3, PartitionVariant::with_t);
    const auto set = sharp_set(tab, part, nullptr, ParameterSpace{-50, 50},
                               Regime::unconditional);
    if (!set.wald || set.kind != SetKind::interval) continue;
    ++total;
    const bool valid = wald_validity_check(tab, part, 0.0).holds;
    const bool inside =
        *set.wald >= set.lo - 1e-10 && *set.wald <= set.hi + 1e-10;
    if (valid == inside) ++agree;
  }
  REQUIRE(total > 10);
  REQUIRE(agree == total);
}

TEST_CASE("exogeneity bounds: t = z needs no false negatives") {
  std::vector<double> y{0, 1, 0, 1, 0, 1, 1, 1};
  std::vector<std::uint8_t> z{1, 1, 1, 1, 0, 0, 0, 0};
  auto tab = make_table(y, z, z);
  const auto part = build_partition(tab, 2, PartitionVariant::with_t);
  const auto me = exogenous_me_set(tab, part);
  REQUIRE(me.feasible);
  REQUIRE(me.omega_lo == 0.0);
}

TEST_CASE("exogeneity bounds recover the true misclassification odds") {
  // forward-construct the exact observable joint from known (p0, p1)
  const double p0 = 0.1, p1 = 0.15;
  // latent design: compliers 0.5, always 0.25, never 0.25;
  // y | t* discrete on {0,1}: P(y=1|t*=1) = 0.8, P(y=1|t*=0) = 0.3
  auto build = [&](double z) {
    // returns f(y,t | Z=z) over the 4 points (y,t)
    std::array<double, 4> f{};  // index y*2+t
    const double pt1 = z ? 0.75 : 0.25;  // P(T*=1|z): always + z*compliers
    for (int ts = 0; ts <= 1; ++ts) {
      const double pts = ts ? pt1 : 1 - pt1;
      for (int yv = 0; yv <= 1; ++yv) {
        const double py = ts ? (yv ? 0.8 : 0.2) : (yv ? 0.3 : 0.7);
        for (int tv = 0; tv <= 1; ++tv) {
          const double pm = ts ? (tv ? 1 - p1 : p1) : (tv ? p0 : 1 - p0);
          f[yv * 2 + tv] += pts * py * pm;
        }
      }
    }
    return f;
  };
  const auto f1 = build(1), f0 = build(0);
  // expand to an exact empirical table: counts proportional to probabilities
  std::vector<double> y;
  std::vector<std::uint8_t> t, z;
  const int scale = 4000;
  for (int zi = 0; zi <= 1; ++zi) {
    const auto& f = zi ? f1 : f0;
    for (int yv = 0; yv <= 1; ++yv)
      for (int tv = 0; tv <= 1; ++tv) {
        const int count = static_cast<int>(std::lround(f[yv * 2 + tv] * scale));
        for (int c = 0; c < count; ++c) {
          y.push_back(yv);
          t.push_back(static_cast<std::uint8_t>(tv));
          z.push_back(static_cast<std::uint8_t>(zi));
        }
      }
  }
  auto tab = make_table(std::move(y), std::move(t), std::move(z));
  const auto part = build_partition(tab, 2, PartitionVariant::with_t);
  const auto me = exogenous_me_set(tab, part);
  REQUIRE(me.feasible);
  const double omega_true = p1 / (1 - p0 - p1);
  REQUIRE(me.omega_lo <= omega_true + 1e-9);
  REQUIRE(me.omega_hi >= omega_true - 1e-9);
  // the true LATE (= E[y1]-E[y0] = 0.5) lies in the theta image
  REQUIRE_FALSE(me.theta_unbounded);
  REQUIRE(me.theta_lo <= 0.5 + 1e-9);
  REQUIRE(me.theta_hi >= 0.5 - 1e-9);
}

TEST_CASE("regime and partition layouts are validated") {
  const auto tab = rand_table(200, 44);
  const auto pyt = build_partition(tab, 2, PartitionVariant::with_t);
  const auto py = build_partition(tab, 2, PartitionVariant::y_only);
  REQUIRE_THROWS_AS(
      sharp_set(tab, py, nullptr, std::nullopt, Regime::unconditional),
      ValidationError);
  REQUIRE_THROWS_AS(
      sharp_set(tab, pyt, nullptr, std::nullopt, Regime::with_r),
      ValidationError);
  REQUIRE_THROWS_AS(
      sharp_set(tab, pyt, nullptr, std::nullopt, Regime::conditional),
      ValidationError);
  REQUIRE_NOTHROW(sharp_set(tab, py, nullptr, std::nullopt, Regime::no_t));
}

TEST_CASE("enumerated sign functions attain the plug-in tv") {
  const auto tab = rand_table(400, 71);
  const auto pi = fit_lpm(tab);
  for (int kn : {1, 2}) {
    const auto part = build_partition(tab, kn, PartitionVariant::with_t);
    const auto hs = enumerate_sign_functions(part);
    double best = -1e300;
    for (const auto& h : hs) {
      std::vector<double> hx(tab.n);
      for (std::size_t i = 0; i < tab.n; ++i) hx[i] = h[part.cell_index(tab, i)];
      best = std::max(best, weighted_delta(tab, pi, hx));
    }
    REQUIRE(best == Catch::Approx(tv_distance(tab, part, &pi)).margin(1e-12));
  }
}

TEST_CASE("wald equals itt when t = z") {
  std::vector<double> y{2, 3, 5, 7, 1, 4};
  std::vector<std::uint8_t> z{1, 0, 1, 0, 1, 0};
  auto tab = make_table(y, z, z);
  REQUIRE(delta_t(tab) == 1.0);
  REQUIRE(wald(tab) == itt(tab));
}

TEST_CASE("conditional regime: saturated pi recovers E[TV | V] exactly") {
  // discrete covariate with three levels, instrument loading on it
  CounterRng rng(314);
  const std::size_t n = 3000;
  std::vector<double> y(n), d1(n), d2(n);
  std::vector<std::uint8_t> t(n), z(n);
  std::vector<int> lvl(n);
  for (std::size_t i = 0; i < n; ++i) {
    lvl[i] = static_cast<int>(rng.uniform01() * 3);
    d1[i] = lvl[i] == 1;
    d2[i] = lvl[i] == 2;
    z[i] = rng.uniform01() < 0.3 + 0.2 * lvl[i];
    const std::uint8_t ts = rng.uniform01() < (z[i] ? 0.8 : 0.3);
    y[i] = ts + 0.5 * lvl[i] + rng.normal();
    t[i] = rng.uniform01() < 0.15 ? 1 - ts : ts;
  }
  auto tab = make_table(std::move(y), std::move(t), std::move(z), {}, {d1, d2});
  const auto pi = fit_lpm(tab, 1e-4);
  const auto part =
      build_partition(tab, 2, PartitionVariant::with_t, /*v_cells=*/2);
  REQUIRE(part.cell_count() == 16);
  const double tv_cond = tv_distance(tab, part, &pi);

  // group-by oracle: share-weighted within-level TV over the same (y,t) cells
  double oracle = 0;
  for (int g = 0; g < 3; ++g) {
    std::vector<double> p1(4, 0.0), p0(4, 0.0);
    double n1 = 0, n0 = 0, ng = 0;
    for (std::size_t i = 0; i < tab.n; ++i) {
      if (lvl[i] != g) continue;
      ++ng;
      const std::size_t yb = CellPartition::bin_of(tab.y[i], part.y_edges);
      const std::size_t c = yb * 2 + tab.t[i];
      if (tab.z[i]) { p1[c] += 1; ++n1; }
      else          { p0[c] += 1; ++n0; }
    }
    double tv_g = 0;
    for (std::size_t c = 0; c < 4; ++c) tv_g += std::fabs(p1[c] / n1 - p0[c] / n0);
    oracle += ng / static_cast<double>(tab.n) * 0.5 * tv_g;
  }
  REQUIRE(tv_cond == Catch::Approx(oracle).margin(1e-10));

  const auto set = sharp_set(tab, part, &pi, std::nullopt, Regime::conditional);
  REQUIRE(set.kind == SetKind::interval);
  REQUIRE(set.itt == Catch::Approx(weighted_delta_y(tab, pi)));
  REQUIRE(set.hi == Catch::Approx(set.itt / tv_cond));
}

TEST_CASE("irreconcilable cell pattern is reported as infeasible") {
  // treated mass falls with z while untreated mass rises at the same y:
  // DD < 0 with a falling treated cell rejects the joint assumptions
  std::vector<double> y;
  std::vector<std::uint8_t> t, z;
  auto push = [&](int count, double yv, int tv, int zv) {
    for (int i = 0; i < count; ++i) {
      y.push_back(yv);
      t.push_back(static_cast<std::uint8_t>(tv));
      z.push_back(static_cast<std::uint8_t>(zv));
    }
  };
  // z=0 arm: y=0 mostly treated; z=1 arm: y=0 mostly untreated
  push(40, 0.0, 1, 0); push(10, 0.0, 0, 0); push(50, 1.0, 0, 0);
  push(10, 0.0, 1, 1); push(40, 0.0, 0, 1); push(50, 1.0, 1, 1);
  auto tab = make_table(std::move(y), std::move(t), std::move(z));
  const auto part = build_partition(tab, 2, PartitionVariant::with_t);
  const auto me = exogenous_me_set(tab, part);
  REQUIRE_FALSE(me.feasible);
  REQUIRE_FALSE(me.violating_cells.empty());
}
