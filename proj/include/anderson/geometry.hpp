#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "anderson/error.hpp"
#include "anderson/grid.hpp"
#include "anderson/potential.hpp"

namespace anderson {

struct AlphaCube {
  Coord anchor{0, 0, 0};
  int side = 1;

  Cuboid box() const { return Cuboid{anchor, {side, side, side}}; }
  bool operator==(const AlphaCube&) const = default;
};

struct GeometryStats {
  int d = 1;
  std::vector<AlphaCube> maximal_alpha_cubes;
  int L = 1;      // largest maximal-cube side, 1 when there is no α-cell
  int kappa = 0;  // max number of maximal cubes covering one α-cell
  bool has_valleys = false;
  std::vector<Cuboid> valleys;
  std::map<int, int> valley_counts;  // minimal side j -> number of valleys
  std::map<int, double> anisotropy;  // threshold -> max side ratio among valleys with min side >= threshold

  int max_valley_width() const { return valley_counts.empty() ? 0 : valley_counts.rbegin()->first; }
};

namespace detail {

/// Cubes of side k+1 from cubes of side k: anchor a survives iff all 2^d
/// side-k cubes at a + s, s ∈ {0,1}^d, are α.
inline std::vector<std::uint8_t> grow_cubes(const Lattice& lat, const std::vector<std::uint8_t>& prev) {
  std::vector<std::uint8_t> next(prev.size(), 0);
  const int corners = 1 << lat.d;
  for (std::size_t i = 0; i < prev.size(); ++i) {
    if (!prev[i]) continue;
    const Coord c = lat.coords(i);
    bool all = true;
    for (int s = 1; s < corners && all; ++s) {
      Coord q = c;
      for (int a = 0; a < lat.d; ++a) q[a] += (s >> a) & 1;
      all = prev[lat.index(q)] != 0;
    }
    next[i] = all ? 1 : 0;
  }
  return next;
}

}  // namespace detail

/// All maximal α-cubes (torus-aware, O(cells · L)). A side-k cube at
/// anchor a is maximal iff no side-(k+1) cube at a − s, s ∈ {0,1}^d, is α.
inline std::vector<AlphaCube> maximal_alpha_cubes(const PotentialField& field) {
  const Lattice lat = cell_lattice(field.grid);
  const int n = lat.side;
  std::vector<AlphaCube> out;
  std::vector<std::uint8_t> level(field.occupancy.size());
  for (std::size_t i = 0; i < level.size(); ++i) level[i] = field.occupancy[i] ? 0 : 1;
  const int corners = 1 << lat.d;
  for (int k = 1; k <= n; ++k) {
    if (std::none_of(level.begin(), level.end(), [](auto v) { return v != 0; })) break;
    if (k == n) {
      // Every anchor describes the whole torus; record it once.
      out.push_back(AlphaCube{{0, 0, 0}, n});
      break;
    }
    const auto next = detail::grow_cubes(lat, level);
    for (std::size_t i = 0; i < level.size(); ++i) {
      if (!level[i]) continue;
      const Coord c = lat.coords(i);
      bool extendable = false;
      for (int s = 0; s < corners && !extendable; ++s) {
        Coord q = c;
        for (int a = 0; a < lat.d; ++a) q[a] -= (s >> a) & 1;
        extendable = next[lat.index(q)] != 0;
      }
      if (!extendable) out.push_back(AlphaCube{c, k});
    }
    level = next;
  }
  return out;
}

inline GeometryStats analyze_geometry(const PotentialField& field) {
  GeometryStats st;
  st.d = field.grid.d;
  st.maximal_alpha_cubes = maximal_alpha_cubes(field);
  for (const auto& c : st.maximal_alpha_cubes) st.L = std::max(st.L, c.side);

  const Lattice lat = cell_lattice(field.grid);
  std::vector<int> cover(field.occupancy.size(), 0);
  for (const auto& c : st.maximal_alpha_cubes)
    for_each_cell(lat, c.box(), [&](std::size_t i) { ++cover[i]; });
  st.kappa = cover.empty() ? 0 : *std::max_element(cover.begin(), cover.end());

  const bool cuboid_kind = field.kind == FieldKind::tensor || field.kind == FieldKind::domino ||
                           field.kind == FieldKind::planted || field.kind == FieldKind::periodic ||
                           field.grid.d == 1;
  st.has_valleys = cuboid_kind;
  if (cuboid_kind) {
    st.valleys = field.valleys;
    for (const auto& v : st.valleys) ++st.valley_counts[v.min_side(st.d)];
    for (const auto& [threshold, count] : st.valley_counts) {
      (void)count;
      double rho = 1.0;
      for (const auto& v : st.valleys)
        if (v.min_side(st.d) >= threshold)
          rho = std::max(rho, static_cast<double>(v.max_side(st.d)) / v.min_side(st.d));
      st.anisotropy[threshold] = rho;
    }
  }
  return st;
}

/// Anisotropy over valleys with minimal side >= threshold (1 if none).
inline double anisotropy_at(const GeometryStats& st, int threshold) {
  double rho = 1.0;
  for (const auto& v : st.valleys)
    if (v.min_side(st.d) >= threshold) rho = std::max(rho, static_cast<double>(v.max_side(st.d)) / v.min_side(st.d));
  return rho;
}

/// Dimension budget ⌈ρ^{d−1} Σ_{valleys, j > ℓ} ⌊j/ℓ⌋^d⌉ where j is the
/// minimal valley side and ρ the anisotropy at threshold ℓ.
inline long estimate_K(const GeometryStats& st, int ell) {
  require(st.has_valleys, "estimate_K: the field has no cuboid valley decomposition");
  require(ell >= 1, "estimate_K: threshold must be >= 1");
  double sum = 0.0;
  for (const auto& [j, count] : st.valley_counts)
    if (j > ell) sum += count * std::pow(static_cast<double>(j / ell), st.d);
  require(sum > 0.0, "estimate_K: no valley is wider than the threshold " + std::to_string(ell));
  return static_cast<long>(std::ceil(std::pow(anisotropy_at(st, ell), st.d - 1) * sum - 1e-12));
}

}  // namespace anderson
