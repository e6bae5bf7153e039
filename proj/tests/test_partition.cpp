#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "tvlate/partition.hpp"
#include "tvlate/rng.hpp"

using namespace tvlate;

namespace {

ObservationTable toy_table(std::size_t n, std::uint64_t seed, bool with_r = false) {
  CounterRng rng(seed);
  std::vector<double> y(n);
  std::vector<std::uint8_t> t(n), z(n), r;
  if (with_r) r.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng.normal();
    t[i] = rng.uniform01() < 0.5;
    z[i] = i % 2;
    if (with_r) r[i] = static_cast<std::uint8_t>(rng.uniform01() * 3);
  }
  return make_table(std::move(y), std::move(t), std::move(z), std::move(r));
}

}  // namespace

TEST_CASE("k_n=1 with_t gives the two cells {t=0},{t=1}") {
  const auto tab = toy_table(50, 1);
  const auto part = build_partition(tab, 1, PartitionVariant::with_t);
  REQUIRE(part.cell_count() == 2);
  REQUIRE(part.cell_index(0.3, 0, 0, nullptr, 0) == 0);
  REQUIRE(part.cell_index(0.3, 1, 0, nullptr, 0) == 1);
}

TEST_CASE("dyadic refinement nests the edge sets") {
  const auto tab = toy_table(400, 2);
  const auto p2 = build_partition(tab, 2, PartitionVariant::with_t);
  const auto p4 = build_partition(tab, 4, PartitionVariant::with_t);
  const auto p8 = build_partition(tab, 8, PartitionVariant::with_t);
  for (double e : p2.y_edges)
    REQUIRE(std::find(p4.y_edges.begin(), p4.y_edges.end(), e) != p4.y_edges.end());
  for (double e : p4.y_edges)
    REQUIRE(std::find(p8.y_edges.begin(), p8.y_edges.end(), e) != p8.y_edges.end());
}

TEST_CASE("r crossing multiplies cells by the level count") {
  const auto tab = toy_table(300, 3, true);
  const auto part = build_partition(tab, 2, PartitionVariant::with_t_r);
  REQUIRE(part.r_values.size() == 3);
  REQUIRE(part.cell_count() == 2 * 2 * 3);
}

TEST_CASE("every observation maps to exactly one cell") {
  const auto tab = toy_table(500, 4, true);
  const auto part = build_partition(tab, 2, PartitionVariant::with_t_r);
  std::vector<std::size_t> hits(part.cell_count(), 0);
  for (std::size_t i = 0; i < tab.n; ++i) {
    const std::size_t c = part.cell_index(tab, i);
    REQUIRE(c < part.cell_count());
    ++hits[c];
  }
  std::size_t total = 0;
  for (auto h : hits) total += h;
  REQUIRE(total == tab.n);
}

TEST_CASE("enumeration order counts in binary with cell 0 most significant") {
  const auto tab = toy_table(40, 5);
  const auto part = build_partition(tab, 1, PartitionVariant::with_t);
  const auto hs = enumerate_sign_functions(part);
  REQUIRE(hs.size() == 4);
  REQUIRE(hs[0] == std::vector<double>{-0.5, -0.5});
  REQUIRE(hs[1] == std::vector<double>{-0.5, 0.5});
  REQUIRE(hs[2] == std::vector<double>{0.5, -0.5});
  REQUIRE(hs[3] == std::vector<double>{0.5, 0.5});

  const auto p1 = build_partition(tab, 1, PartitionVariant::y_only);
  REQUIRE(enumerate_sign_functions(p1).size() == 2);

  CellPartition three;
  three.y_edges = {0.0, 1.0};
  const auto h3 = enumerate_sign_functions(three);
  REQUIRE(h3.size() == 8);
  std::set<std::vector<double>> uniq(h3.begin(), h3.end());
  REQUIRE(uniq.size() == 8);
}

TEST_CASE("cap and degeneracy errors") {
  const auto tab = toy_table(600, 6);
  REQUIRE_THROWS_AS(build_partition(tab, 16, PartitionVariant::with_t),
                    ValidationError);
  REQUIRE_NOTHROW(build_partition(tab, 16, PartitionVariant::with_t, 0, false,
                                  /*enforce_cap=*/false));
  auto flat = make_table({1.0, 1.0, 1.0, 1.0}, {0, 1, 0, 1}, {0, 1, 0, 1});
  REQUIRE_THROWS_AS(build_partition(flat, 2, PartitionVariant::with_t),
                    ValidationError);
  REQUIRE_NOTHROW(build_partition(flat, 1, PartitionVariant::with_t));
}
