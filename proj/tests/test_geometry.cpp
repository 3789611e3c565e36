#include <catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <tuple>
#include <vector>

#include "anderson/geometry.hpp"

using namespace anderson;

namespace {

const Amplitudes kAmp{1.0, 64.0};

using CubeKey = std::tuple<int, int, int, int>;

CubeKey key(const AlphaCube& c) { return {c.anchor[0], c.anchor[1], c.anchor[2], c.side}; }

/// Exhaustive oracle: every (anchor, side) cube inside the α-region, kept
/// if no other such cube's cell set strictly contains it.
std::set<CubeKey> brute_force_maximal(const PotentialField& f) {
  const Lattice lat = cell_lattice(f.grid);
  std::vector<std::pair<AlphaCube, std::set<std::size_t>>> cubes;
  for (int k = 1; k <= lat.side; ++k) {
    for (std::size_t a = 0; a < lat.size(); ++a) {
      AlphaCube c{lat.coords(a), k};
      std::set<std::size_t> cells;
      bool inside = true;
      for_each_cell(lat, c.box(), [&](std::size_t i) {
        cells.insert(i);
        inside = inside && !f.is_beta(i);
      });
      if (inside) cubes.emplace_back(c, std::move(cells));
    }
  }
  std::set<CubeKey> out;
  std::set<std::set<std::size_t>> seen;
  for (const auto& [c, cells] : cubes) {
    bool strictly_inside = false;
    for (const auto& other : cubes) {
      const auto& oc = other.second;
      if (oc.size() > cells.size() && std::includes(oc.begin(), oc.end(), cells.begin(), cells.end())) {
        strictly_inside = true;
        break;
      }
    }
    if (!strictly_inside && seen.insert(cells).second) out.insert(key(c));
  }
  return out;
}

std::set<CubeKey> keys(const std::vector<AlphaCube>& cubes) {
  std::set<CubeKey> out;
  for (const auto& c : cubes) out.insert(key(c));
  return out;
}

}  // namespace

TEST_CASE("periodic 2D board has L = 1 and kappa = 1") {
  auto st = analyze_geometry(gen_periodic(GridSpec{2, 4, 0}, kAmp));
  CHECK(st.L == 1);
  CHECK(st.kappa == 1);
  CHECK(st.maximal_alpha_cubes.size() == 4);
  CHECK(st.valley_counts.at(1) == 4);
  CHECK(st.anisotropy.at(1) == 1.0);
}

TEST_CASE("1D fields have kappa = 1") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto st = analyze_geometry(gen_iid(GridSpec{1, 64, seed}, kAmp, 0.4));
    CHECK(st.kappa == 1);
    std::size_t total = 0;
    for (auto [j, n] : st.valley_counts) total += static_cast<std::size_t>(n);
    CHECK(total == st.valleys.size());
    CHECK(st.max_valley_width() == st.L);
  }
}

TEST_CASE("L-shaped region matches exhaustive enumeration") {
  // 6x6 torus, α on an L: rows y=1..3 at x=1..2 plus row y=3..4 at x=1..4.
  GridSpec g{2, 6, 0};
  std::vector<std::uint8_t> occ(36, 1);
  const Lattice lat = cell_lattice(g);
  for (int y = 1; y <= 3; ++y)
    for (int x = 1; x <= 2; ++x) occ[lat.index({x, y, 0})] = 0;
  for (int y = 3; y <= 4; ++y)
    for (int x = 1; x <= 4; ++x) occ[lat.index({x, y, 0})] = 0;
  auto f = make_field(g, kAmp, occ);
  auto st = analyze_geometry(f);
  CHECK(keys(st.maximal_alpha_cubes) == brute_force_maximal(f));
  CHECK(st.L == 2);
  // Cubes of side 2 at (1,1),(1,2),(1,3),(2,3),(3,3); cell (2,3) lies in three.
  CHECK(st.maximal_alpha_cubes.size() == 5);
  CHECK(st.kappa == 3);
}

TEST_CASE("maximal cubes match brute force on random fields") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    for (int d = 1; d <= 2; ++d) {
      const int n = d == 1 ? 32 : 10;
      for (double p : {0.2, 0.5}) {
        auto f = gen_iid(GridSpec{d, n, seed}, kAmp, p);
        auto st = analyze_geometry(f);
        CHECK(keys(st.maximal_alpha_cubes) == brute_force_maximal(f));
        CHECK(st.kappa <= static_cast<int>(std::pow(st.L, d)));
      }
    }
  }
  auto f3 = gen_iid(GridSpec{3, 5, 7}, kAmp, 0.3);
  CHECK(keys(analyze_geometry(f3).maximal_alpha_cubes) == brute_force_maximal(f3));
}

TEST_CASE("cubes wrap across the torus seam") {
  GridSpec g{2, 6, 0};
  std::vector<std::uint8_t> occ(36, 1);
  const Lattice lat = cell_lattice(g);
  for (int y : {5, 0})
    for (int x : {5, 0}) occ[lat.index({x, y, 0})] = 0;
  auto st = analyze_geometry(make_field(g, kAmp, occ));
  REQUIRE(st.maximal_alpha_cubes.size() == 1);
  CHECK(st.maximal_alpha_cubes[0] == AlphaCube{{5, 5, 0}, 2});
}

TEST_CASE("degenerate fields") {
  GridSpec g{2, 8, 0};
  auto all_beta = analyze_geometry(gen_iid(g, kAmp, 1.0));
  CHECK(all_beta.maximal_alpha_cubes.empty());
  CHECK(all_beta.L == 1);
  CHECK(all_beta.kappa == 0);
  auto all_alpha = analyze_geometry(gen_iid(g, kAmp, 0.0));
  REQUIRE(all_alpha.maximal_alpha_cubes.size() == 1);
  CHECK(all_alpha.L == 8);
  CHECK(all_alpha.kappa == 1);
}

TEST_CASE("valley statistics of a tensor field") {
  GridSpec g{2, 4, 0};
  auto st = analyze_geometry(gen_tensor_from_factors(g, kAmp, {{1, 1, 0, 0}, {1, 0, 1, 0}}));
  REQUIRE(st.has_valleys);
  CHECK(st.valley_counts.size() == 1);
  CHECK(st.valley_counts.at(1) == 2);
  CHECK(st.anisotropy.at(1) == 2.0);
  CHECK(st.L == 1);
  CHECK_THROWS_AS(estimate_K(st, 1), InvalidArgument);
}

TEST_CASE("estimate_K against hand evaluation") {
  // x runs: lengths 4, 2; y runs: lengths 3, 1 -> valleys 4x3, 4x1, 2x3, 2x1.
  std::vector<std::uint8_t> fx(16, 0), fy(16, 0);
  for (int i : {0, 1, 2, 3, 5, 6}) fx[static_cast<std::size_t>(i)] = 1;
  for (int i : {0, 1, 2, 4}) fy[static_cast<std::size_t>(i)] = 1;
  auto st = analyze_geometry(gen_tensor_from_factors(GridSpec{2, 16, 0}, kAmp, {fx, fy}));
  CHECK(st.valleys.size() == 4);
  CHECK(st.valley_counts.at(1) == 2);
  CHECK(st.valley_counts.at(2) == 1);
  CHECK(st.valley_counts.at(3) == 1);
  CHECK(st.L == 3);
  // l=1: rho=4, sum over j in {3,2}: 9 + 4 = 13 -> 52.
  CHECK(estimate_K(st, 1) == 52);
  // l=2: rho over {4x3, 2x3} = 1.5, sum floor(3/2)^2 = 1 -> 2.
  CHECK(estimate_K(st, 2) == 2);
  CHECK_THROWS_AS(estimate_K(st, 3), InvalidArgument);
  CHECK_THROWS_AS(estimate_K(st, 0), InvalidArgument);
}

TEST_CASE("estimate_K for a single valley") {
  for (int L : {4, 6, 8}) {
    auto st = analyze_geometry(plant_valleys(GridSpec{1, 32, 0}, kAmp, {Cuboid{{3, 0, 0}, {L, 1, 1}}}));
    CHECK(st.L == L);
    CHECK(estimate_K(st, (L + 1) / 2) == 2);
    CHECK_THROWS_AS(estimate_K(st, L), InvalidArgument);
  }
}

TEST_CASE("iid fields in 2D have no valley decomposition") {
  auto st = analyze_geometry(gen_iid(GridSpec{2, 8, 1}, kAmp, 0.5));
  CHECK_FALSE(st.has_valleys);
  CHECK_THROWS_AS(estimate_K(st, 1), InvalidArgument);
}
