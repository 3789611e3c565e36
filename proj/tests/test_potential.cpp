#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "anderson/potential.hpp"

using namespace anderson;

namespace {

const Amplitudes kAmp{1.0, 64.0};

std::vector<std::uint8_t> occ(std::initializer_list<int> v) {
  std::vector<std::uint8_t> out;
  for (int x : v) out.push_back(static_cast<std::uint8_t>(x));
  return out;
}

}  // namespace

TEST_CASE("periodic 1D board alternates starting with beta") {
  auto f = gen_periodic(GridSpec{1, 4, 0}, kAmp);
  CHECK(f.occupancy == occ({1, 0, 1, 0}));
  CHECK(f.kind == FieldKind::periodic);
  REQUIRE(f.valleys.size() == 2);
  CHECK(f.valleys[0] == Cuboid{{1, 0, 0}, {1, 1, 1}});
  CHECK(f.valleys[1] == Cuboid{{3, 0, 0}, {1, 1, 1}});
}

TEST_CASE("periodic 2D smallest board has one alpha cell") {
  auto f = gen_periodic(GridSpec{2, 2, 0}, kAmp);
  CHECK(f.occupancy == occ({1, 1, 1, 0}));
  CHECK(f.beta_count() == 3);
}

TEST_CASE("periodic board has (2 eps)^-d alpha cells") {
  for (int d = 1; d <= 3; ++d) {
    auto f = gen_periodic(GridSpec{d, 8, 0}, kAmp);
    const std::size_t alpha = f.num_cells() - f.beta_count();
    CHECK(alpha == static_cast<std::size_t>(std::pow(4, d)));
    CHECK(f.valleys.size() == alpha);
  }
}

TEST_CASE("periodic rejects odd inv_eps") {
  CHECK_THROWS_AS(gen_periodic(GridSpec{1, 5, 0}, kAmp), InvalidArgument);
}

TEST_CASE("amplitude and grid validation") {
  CHECK_THROWS_AS(gen_periodic(GridSpec{1, 4, 0}, Amplitudes{2.0, 1.0}), InvalidArgument);
  CHECK_THROWS_AS(gen_periodic(GridSpec{1, 4, 0}, Amplitudes{0.0, 0.0}), InvalidArgument);
  CHECK_THROWS_AS(gen_periodic(GridSpec{4, 4, 0}, kAmp), InvalidArgument);
  CHECK_THROWS_AS(gen_iid(GridSpec{1, 1, 0}, kAmp, 0.5), InvalidArgument);
  CHECK_THROWS_AS(gen_iid(GridSpec{1, 8, 0}, kAmp, 1.5), InvalidArgument);
  CHECK_THROWS_AS(make_field(GridSpec{1, 4, 0}, kAmp, occ({1, 0})), InvalidArgument);
}

TEST_CASE("tensor factors 0101 reproduce the periodic board") {
  for (int d = 1; d <= 3; ++d) {
    GridSpec g{d, 6, 0};
    std::vector<std::vector<std::uint8_t>> factors(static_cast<std::size_t>(d), occ({0, 1, 0, 1, 0, 1}));
    CHECK(gen_tensor_from_factors(g, kAmp, factors).occupancy == gen_periodic(g, kAmp).occupancy);
  }
}

TEST_CASE("tensor factors 1010 reproduce the periodic board up to a one-cell shift") {
  GridSpec g{2, 4, 0};
  std::vector<std::vector<std::uint8_t>> factors(2, occ({1, 0, 1, 0}));
  auto t = gen_tensor_from_factors(g, kAmp, factors);
  auto p = gen_periodic(g, kAmp);
  const Lattice lat = cell_lattice(g);
  for (std::size_t i = 0; i < t.num_cells(); ++i) {
    Coord c = lat.coords(i);
    c[0] += 1;
    c[1] += 1;
    CHECK(t.occupancy[i] == p.occupancy[lat.index(c)]);
  }
}

TEST_CASE("hand-enumerated 2D tensor field") {
  // Factors x: 1100, y: 1010 -> alpha at (0,0),(1,0),(0,2),(1,2).
  GridSpec g{2, 4, 0};
  auto f = gen_tensor_from_factors(g, kAmp, {occ({1, 1, 0, 0}), occ({1, 0, 1, 0})});
  std::vector<std::uint8_t> expected(16, 1);
  for (std::size_t i : {0u, 1u, 8u, 9u}) expected[i] = 0;
  CHECK(f.occupancy == expected);
  REQUIRE(f.valleys.size() == 2);
  CHECK(f.valleys[0] == Cuboid{{0, 0, 0}, {2, 1, 1}});
  CHECK(f.valleys[1] == Cuboid{{0, 2, 0}, {2, 1, 1}});
}

TEST_CASE("tensor valleys wrap across the seam") {
  GridSpec g{1, 6, 0};
  auto f = gen_tensor_from_factors(g, kAmp, {occ({1, 0, 0, 1, 0, 1})});
  REQUIRE(f.valleys.size() == 2);
  CHECK(f.valleys[0] == Cuboid{{3, 0, 0}, {1, 1, 1}});
  CHECK(f.valleys[1] == Cuboid{{5, 0, 0}, {2, 1, 1}});
}

TEST_CASE("random tensor valleys are cuboids fenced by beta") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    GridSpec g{2, 16, seed};
    auto f = gen_tensor(g, kAmp, 0.6);
    const Lattice lat = cell_lattice(g);
    std::vector<int> hits(f.num_cells(), 0);
    for (const auto& v : f.valleys) {
      for_each_cell(lat, v, [&](std::size_t i) {
        CHECK_FALSE(f.is_beta(i));
        ++hits[i];
      });
      for (int axis = 0; axis < 2; ++axis) {
        if (v.extent[axis] == g.inv_eps) continue;
        Cuboid before = v, after = v;
        before.extent[axis] = 1;
        before.anchor[axis] = v.anchor[axis] - 1;
        after.extent[axis] = 1;
        after.anchor[axis] = v.anchor[axis] + v.extent[axis];
        for_each_cell(lat, before, [&](std::size_t i) { CHECK(f.is_beta(i)); });
        for_each_cell(lat, after, [&](std::size_t i) { CHECK(f.is_beta(i)); });
      }
    }
    for (std::size_t i = 0; i < f.num_cells(); ++i) CHECK(hits[i] == (f.is_beta(i) ? 0 : 1));
  }
}

TEST_CASE("degenerate probabilities") {
  GridSpec g{2, 8, 3};
  CHECK(gen_tensor(g, kAmp, 0.0).beta_count() == 64);
  CHECK(gen_tensor(g, kAmp, 0.0).valleys.empty());
  CHECK(gen_iid(g, kAmp, 1.0).beta_count() == 64);
  CHECK(gen_iid(g, kAmp, 0.0).beta_count() == 0);
}

TEST_CASE("generators are deterministic in the seed") {
  GridSpec g{1, 256, 42};
  auto a = gen_iid(g, kAmp, 0.5);
  auto b = gen_iid(g, kAmp, 0.5);
  CHECK(a.occupancy == b.occupancy);
  CHECK(a.beta_count() > 96);
  CHECK(a.beta_count() < 160);
  GridSpec g2 = g;
  g2.seed = 43;
  CHECK(gen_iid(g2, kAmp, 0.5).occupancy != a.occupancy);
  GridSpec gd{2, 16, 9};
  CHECK(gen_domino(gd, kAmp, {}).occupancy == gen_domino(gd, kAmp, {}).occupancy);
  CHECK(gen_tensor(gd, kAmp, 0.5).occupancy == gen_tensor(gd, kAmp, 0.5).occupancy);
}

TEST_CASE("domino 1D forced single 2-block") {
  DominoParams p;
  p.forced_levels = {2};
  bool seen[2] = {false, false};
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    auto f = gen_domino(GridSpec{1, 4, seed}, kAmp, p);
    const bool a = f.occupancy == occ({0, 0, 1, 1});
    const bool b = f.occupancy == occ({1, 1, 0, 0});
    CHECK((a || b));
    seen[a ? 0 : 1] = true;
  }
  CHECK(seen[0]);
  CHECK(seen[1]);
}

TEST_CASE("domino tilings are exact partitions") {
  for (int d = 1; d <= 3; ++d) {
    const int n = d == 3 ? 6 : 8;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      GridSpec g{d, n, seed};
      auto tiling = domino_tiling(g, DominoParams{});
      const Lattice lat = cell_lattice(g);
      std::vector<int> hits(g.num_cells(), 0);
      std::size_t volume = 0;
      for (const auto& b : tiling.blocks) {
        volume += b.box(d).volume(d);
        for_each_cell(lat, b.box(d), [&](std::size_t i) { ++hits[i]; });
      }
      CHECK(volume == g.num_cells());
      CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
      auto f = field_from_tiling(g, kAmp, tiling);
      CHECK(f.beta_count() * 2 == g.num_cells());
    }
  }
}

TEST_CASE("domino rejects odd inv_eps") {
  CHECK_THROWS_AS(gen_domino(GridSpec{2, 7, 0}, kAmp, {}), InvalidArgument);
}

TEST_CASE("domino 1D level histogram is truncated geometric") {
  // All blocks except the last one per tiling have i.i.d. levels.
  const int cap = 6;
  DominoParams p;
  p.level_decay = 0.5;
  p.max_level = cap;
  std::vector<double> counts(cap + 1, 0.0);
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto t = domino_tiling(GridSpec{1, 1024, seed}, p);
    for (std::size_t b = 0; b + 1 < t.blocks.size(); ++b) {
      counts[static_cast<std::size_t>(t.blocks[b].level)] += 1.0;
      total += 1.0;
    }
  }
  double norm = 0.0;
  for (int j = 1; j <= cap; ++j) norm += std::pow(0.5, j);
  for (int j = 1; j <= cap; ++j) {
    const double pj = std::pow(0.5, j) / norm;
    const double sigma = std::sqrt(total * pj * (1.0 - pj));
    INFO("level " << j << " count " << counts[static_cast<std::size_t>(j)] << " expected " << total * pj);
    CHECK(std::abs(counts[static_cast<std::size_t>(j)] - total * pj) <= 3.0 * sigma);
  }
}

TEST_CASE("domino 2D places large blocks") {
  auto t = domino_tiling(GridSpec{2, 32, 5}, DominoParams{});
  int large = 0;
  for (const auto& b : t.blocks) large += b.level >= 2;
  CHECK(large > 0);
}

TEST_CASE("planted valleys") {
  GridSpec g{2, 8, 0};
  auto f = plant_valleys(g, kAmp, {Cuboid{{6, 6, 0}, {3, 2, 1}}});
  CHECK(f.beta_count() == 64 - 6);
  const Lattice lat = cell_lattice(g);
  CHECK_FALSE(f.is_beta(lat.index({0, 7, 0})));
  CHECK(f.is_beta(lat.index({1, 7, 0})));
}
