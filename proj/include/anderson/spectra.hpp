#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "anderson/error.hpp"
#include "anderson/fem.hpp"
#include "anderson/oracle.hpp"
#include "anderson/start_block.hpp"

namespace anderson {

struct GapReport {
  std::vector<double> head;  // E¹..E^{K_max+1}
  std::vector<double> gaps;  // E¹/E^{K+1}, K = 1..K_max
  int chosen_K = 0;
  double gap = 1.0;
  double target = 0.5;
  bool met = false;  // false: chosen_K is the best available, above target
};

/// Smallest K ≤ K_max with E¹/E^{K+1} ≤ target.
inline GapReport gap_scan(const Vec& values, int K_max, double target = 0.5) {
  require(K_max >= 1, "gap_scan: K_max must be >= 1");
  require(values.size() >= K_max + 1, "gap_scan: spectrum has fewer than K_max + 1 eigenvalues");
  require(target > 0.0 && target <= 1.0, "gap_scan: target must lie in (0, 1]");
  GapReport r;
  r.target = target;
  for (int i = 0; i <= K_max; ++i) r.head.push_back(values[i]);
  for (int K = 1; K <= K_max; ++K) r.gaps.push_back(values[0] / values[K]);
  for (int K = 1; K <= K_max; ++K)
    if (r.gaps[static_cast<std::size_t>(K - 1)] <= target) {
      r.chosen_K = K;
      r.gap = r.gaps[static_cast<std::size_t>(K - 1)];
      r.met = true;
      return r;
    }
  const auto best = std::min_element(r.gaps.begin(), r.gaps.end());
  r.chosen_K = static_cast<int>(best - r.gaps.begin()) + 1;
  r.gap = *best;
  return r;
}

struct SpectraTable {
  Spectrum a;
  Spectrum b;
};

inline SpectraTable spectra_compare(const PotentialField& field_a, const PotentialField& field_b,
                                    const SubgridSpec& sub, int n_ev,
                                    std::size_t dense_limit = kDefaultDenseLimit) {
  require(field_a.grid.d == field_b.grid.d && field_a.grid.inv_eps == field_b.grid.inv_eps,
          "spectra_compare: fields live on different grids");
  SubgridSpec sa = sub, sb = sub;
  sa.grid = field_a.grid;
  sb.grid = field_b.grid;
  return {oracle_spectrum(assemble(field_a, sa), n_ev, dense_limit),
          oracle_spectrum(assemble(field_b, sb), n_ev, dense_limit)};
}

/// Upper bound on E^K from K disjoint valley modes, and how many oracle
/// eigenvalues actually lie below it.
struct ValleyCertificate {
  int K = 0;
  double bound = 0.0;     // max Rayleigh quotient of the modes
  double span_max = 0.0;  // largest Ritz value on their span
  int count_below = 0;    // oracle eigenvalues ≤ bound
  bool holds() const { return count_below >= K; }
};

inline ValleyCertificate valley_certificate(const PotentialField& field, const AssembledSystem& sys,
                                            const Spectrum& oracle, int K) {
  const auto block = build_start_valleys(field, sys, K);
  ValleyCertificate c;
  c.K = K;
  c.bound = *std::max_element(block.rayleigh.begin(), block.rayleigh.end());
  c.span_max = span_rayleigh_max(sys, block.vectors);
  const double tol = 1e-12 * c.bound;
  for (Eigen::Index i = 0; i < oracle.values.size(); ++i)
    if (oracle.values[i] <= c.bound + tol) ++c.count_below;
  return c;
}

}  // namespace anderson
