#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tvlate/oracle.hpp"
#include "tvlate/rng.hpp"
#include "tvlate/simulation.hpp"

using namespace tvlate;

namespace {

/// Random discrete joint on (y, t) support points with both arms positive.
DiscreteJoint rand_joint(std::uint64_t seed, int points, bool with_r = false) {
  CounterRng rng(seed);
  DiscreteJoint j;
  for (int k = 0; k < points; ++k) {
    j.pts.push_back({static_cast<double>(k / 2),
                     static_cast<std::uint8_t>(k % 2),
                     with_r ? (k % 3) : -1});
    j.p0.push_back(0.05 + rng.uniform01());
    j.p1.push_back(0.05 + rng.uniform01());
  }
  double s0 = 0, s1 = 0;
  for (int k = 0; k < points; ++k) {
    s0 += j.p0[k];
    s1 += j.p1[k];
  }
  for (int k = 0; k < points; ++k) {
    j.p0[k] /= s0;
    j.p1[k] /= s1;
  }
  return j;
}

CellPartition point_partition(const DiscreteJoint& j) {
  // one cell per support point: y crossing at the point values, t crossing
  CellPartition part;
  part.split_by_t = true;
  std::set<double> ys;
  for (const auto& p : j.pts) ys.insert(p.y);
  double prev = 0;
  bool first = true;
  for (double y : ys) {
    if (!first) part.y_edges.push_back(0.5 * (prev + y));
    prev = y;
    first = false;
  }
  if (j.has_r()) {
    part.split_by_r = true;
    std::set<std::uint8_t> rs;
    for (const auto& p : j.pts) rs.insert(static_cast<std::uint8_t>(p.r));
    part.r_values.assign(rs.begin(), rs.end());
  }
  return part;
}

}  // namespace

TEST_CASE("identical arms give zero under every sign function") {
  auto j = rand_joint(1, 6);
  j.p1 = j.p0;
  REQUIRE(tv_bruteforce(j, point_partition(j)) == 0.0);
}

TEST_CASE("binary 0.8 vs 0.3 example attains one half") {
  DiscreteJoint j;
  j.pts = {{1.0, 0, -1}, {0.0, 0, -1}};
  j.p1 = {0.8, 0.2};
  j.p0 = {0.3, 0.7};
  CellPartition part;
  part.y_edges = {0.5};
  REQUIRE(tv_bruteforce(j, part) == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(joint_tv_cells(j, part) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("brute force equals the half-L1 formula on random joints") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto j = rand_joint(seed, 4 + int(seed % 9));
    const auto part = point_partition(j);
    REQUIRE(tv_bruteforce(j, part) ==
            Catch::Approx(joint_tv_cells(j, part)).margin(1e-12));
  }
}

TEST_CASE("lower construction reproduces the joint with everyone a complier") {
  for (std::uint64_t seed = 40; seed < 48; ++seed) {
    const auto j = rand_joint(seed, 8, seed % 2 == 0);
    const auto dgp = construct_extremal_lower(j);
    REQUIRE(joint_l1_distance(induced_observable(dgp), j) < 1e-12);
    REQUIRE(latent_complier_share(dgp) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(latent_late(dgp) == Catch::Approx(joint_itt(j)).margin(1e-12));
    REQUIRE(satisfies_exclusion(dgp));
  }
}

TEST_CASE("upper construction attains ITT over TV with complier share TV") {
  for (std::uint64_t seed = 60; seed < 68; ++seed) {
    const auto j = rand_joint(seed, 8, seed % 2 == 0);
    const double tv = joint_tv(j);
    REQUIRE(tv > 0);
    const auto dgp = construct_extremal_upper(j);
    REQUIRE(joint_l1_distance(induced_observable(dgp), j) < 1e-12);
    REQUIRE(latent_complier_share(dgp) == Catch::Approx(tv).margin(1e-12));
    REQUIRE(latent_late(dgp) ==
            Catch::Approx(joint_itt(j) / tv).margin(1e-12));
    REQUIRE(satisfies_exclusion(dgp));
  }
}

TEST_CASE("mixtures trace the identified interval monotonically") {
  const auto j = rand_joint(71, 8);
  const double tv = joint_tv(j), itt_v = joint_itt(j);
  const auto lo_dgp = construct_extremal_lower(j);
  const auto up_dgp = construct_extremal_upper(j);
  double prev = latent_late(up_dgp);
  REQUIRE(prev == Catch::Approx(itt_v / tv).margin(1e-12));
  for (double lam : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}) {
    const auto m = mix(lo_dgp, up_dgp, lam);
    REQUIRE(joint_l1_distance(induced_observable(m), j) < 1e-12);
    const double late = latent_late(m);
    // mixing complier shares 1 and tv gives ITT / (lam + (1-lam) tv)
    REQUIRE(late ==
            Catch::Approx(itt_v / (lam + (1 - lam) * tv)).margin(1e-12));
    REQUIRE(std::fabs(late) <= std::fabs(prev) + 1e-12);
    prev = late;
  }
  REQUIRE(prev == Catch::Approx(itt_v).margin(1e-12));
}

TEST_CASE("no-T construction reproduces the joint via f(T|Y,Z)") {
  for (std::uint64_t seed = 90; seed < 96; ++seed) {
    const auto j = rand_joint(seed, 10);
    // y-marginal TV
    std::map<double, double> dy;
    for (std::size_t k = 0; k < j.pts.size(); ++k)
      dy[j.pts[k].y] += j.p1[k] - j.p0[k];
    double tv_y = 0;
    for (auto& [y, d] : dy) tv_y += std::fabs(d);
    tv_y *= 0.5;
    if (tv_y <= 1e-6) continue;
    const auto dgp = construct_extremal_upper_no_t(j);
    REQUIRE(joint_l1_distance(induced_observable(dgp), j) < 1e-12);
    REQUIRE(latent_late(dgp) ==
            Catch::Approx(joint_itt(j) / tv_y).margin(1e-11));
    REQUIRE(latent_complier_share(dgp) == Catch::Approx(tv_y).margin(1e-12));
    // exclusion holds for the (Y, T*) block even though T may load on Z
    REQUIRE(satisfies_exclusion(dgp, /*include_t=*/false));
  }
}

TEST_CASE("discretized simulation joints feed the constructions") {
  DgpConfig cfg;
  cfg.gamma = 0.2;
  cfg.n = 20000;
  cfg.seed = 31;
  const auto tab = simulate(cfg);
  const auto part = build_partition(tab, 4, PartitionVariant::with_t);
  const auto j = joint_from_table(tab, part);
  j.validate();
  const auto up = construct_extremal_upper(j);
  REQUIRE(joint_l1_distance(induced_observable(up), j) < 1e-12);
  const double tv = joint_tv(j);
  REQUIRE(latent_late(up) == Catch::Approx(joint_itt(j) / tv).margin(1e-10));
  // the discretized TV matches the estimator on the same partition
  REQUIRE(tv == Catch::Approx(tv_distance(tab, part)).margin(1e-12));
}
