#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <tuple>
#include <vector>

#include "anderson/error.hpp"
#include "anderson/fem.hpp"
#include "anderson/schwarz.hpp"

namespace anderson {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

/// Least-squares line through (x_i, y_i). A flat line has R² = 1.
inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "fit_line: need at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0, "fit_line: abscissae are all equal");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.points = x.size();
  double ss_res = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += r * r;
  }
  f.r2 = syy > 0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

/// Energy of a state outside growing ε-neighbourhoods of its centres.
/// Radius k means the k-layer dilation of the centre cells.
struct DecayProfile {
  std::vector<Coord> centers;
  std::vector<int> radii;                 // 1..k_max
  std::vector<double> annulus_energies;   // |||v|||_{D ∖ B_k}
  double total_energy = 0.0;              // |||v|||_D
  double fitted_rate = 0.0;               // c in |||v|||_{D∖B_k} ≈ C e^{−ck}
  double fit_quality = 0.0;               // R²
  bool degenerate = false;                // fewer than two resolvable radii
  double fitted_rate_k2 = 0.0;            // same, radii k² against k
  double fit_quality_k2 = 0.0;
};

namespace detail {

/// Slope fit of log(energy) over the radii whose energy exceeds the
/// floor; returns (rate, R², ok).
inline std::tuple<double, double, bool> decay_fit(const std::vector<double>& x, const std::vector<double>& energy,
                                                  double floor) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (energy[i] > floor) {
      xs.push_back(x[i]);
      ys.push_back(std::log(energy[i]));
    }
  if (xs.size() < 2) return {std::numeric_limits<double>::infinity(), 0.0, false};
  const auto f = fit_line(xs, ys);
  return {-f.slope, f.r2, true};
}

/// Distance (in ε-layers) from every cell to the nearest centre.
inline std::vector<int> distance_to_centers(const GridSpec& grid, const std::vector<Coord>& centers) {
  const Lattice cells = cell_lattice(grid);
  std::vector<int> dist(cells.size(), std::numeric_limits<int>::max());
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (const auto& z : centers) dist[c] = std::min(dist[c], cells.distance(cells.coords(c), z));
  return dist;
}

}  // namespace detail

/// Annulus energies around the given centres and the log-linear fits.
inline DecayProfile decay_profile(const AssembledSystem& sys, const Vec& v, const std::vector<Coord>& centers,
                                  int k_max) {
  require(!centers.empty(), "decay profile: no centres");
  require(k_max >= 1, "decay profile: k_max must be >= 1");
  DecayProfile p;
  p.centers = centers;
  const auto energy = cell_energies(sys, v);
  const auto dist = detail::distance_to_centers(sys.sub.grid, centers);
  p.total_energy = std::sqrt(std::max(0.0, std::accumulate(energy.begin(), energy.end(), 0.0)));
  // Outside-energy for every radius 0..max_dist in one pass.
  const int max_dist = *std::max_element(dist.begin(), dist.end());
  std::vector<double> outside(static_cast<std::size_t>(std::max(max_dist, k_max) + 2), 0.0);
  for (std::size_t c = 0; c < energy.size(); ++c) outside[static_cast<std::size_t>(dist[c])] += energy[c];
  for (std::size_t r = outside.size() - 1; r-- > 0;) outside[r] += outside[r + 1];
  auto annulus = [&](int r) { return std::sqrt(std::max(0.0, outside[static_cast<std::size_t>(r + 1)])); };

  const double floor = 1e-12 * p.total_energy;
  std::vector<double> x;
  for (int k = 1; k <= k_max; ++k) {
    p.radii.push_back(k);
    p.annulus_energies.push_back(annulus(k));
    x.push_back(k);
  }
  auto [rate, r2, ok] = detail::decay_fit(x, p.annulus_energies, floor);
  p.fitted_rate = rate;
  p.fit_quality = r2;
  p.degenerate = !ok;

  std::vector<double> xk, ek;
  for (int k = 1; k * k <= k_max; ++k) {
    xk.push_back(k);
    ek.push_back(annulus(k * k));
  }
  if (xk.size() >= 2) {
    auto [rate2, r22, ok2] = detail::decay_fit(xk, ek, floor);
    p.fitted_rate_k2 = rate2;
    p.fit_quality_k2 = ok2 ? r22 : 0.0;
  } else {
    p.fitted_rate_k2 = std::numeric_limits<double>::quiet_NaN();
  }
  return p;
}

/// Cells whose L² mass is a local maximum over the 3^d neighbourhood and at
/// least `threshold` times the global maximum, strongest first, at most
/// `max_centers` of them.
inline std::vector<Coord> localization_centers(const AssembledSystem& sys, const Vec& v, double threshold = 0.5,
                                               std::size_t max_centers = 1) {
  require(max_centers >= 1, "localization centres: max_centers must be >= 1");
  const auto mass = cell_masses(sys, v);
  const Lattice cells = cell_lattice(sys.sub.grid);
  const double peak = *std::max_element(mass.begin(), mass.end());
  const Lattice offsets{cells.d, 3};
  std::vector<std::size_t> found;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (mass[c] < threshold * peak) continue;
    const Coord x = cells.coords(c);
    bool is_max = true;
    for (std::size_t o = 0; o < offsets.size() && is_max; ++o) {
      const Coord off = offsets.coords(o);
      Coord y = x;
      for (int a = 0; a < cells.d; ++a) y[a] += off[a] - 1;
      const std::size_t nb = cells.index(y);
      // Ties go to the lower index so plateaus yield one centre.
      if (mass[nb] > mass[c] || (mass[nb] == mass[c] && nb < c)) is_max = false;
    }
    if (is_max) found.push_back(c);
  }
  std::stable_sort(found.begin(), found.end(), [&](auto a, auto b) { return mass[a] > mass[b]; });
  if (found.size() > max_centers) found.resize(max_centers);
  std::vector<Coord> out;
  for (auto c : found) out.push_back(cells.coords(c));
  return out;
}

inline DecayProfile eigen_decay(const AssembledSystem& sys, const Vec& state, std::optional<std::vector<Coord>> centers,
                                int k_max, std::size_t max_centers = 1) {
  check_dim(sys, state, "eigen_decay");
  const auto z = centers ? *centers : localization_centers(sys, state, 0.5, max_centers);
  return decay_profile(sys, state, z, k_max);
}

struct GreenDecay {
  DecayProfile profile;            // of the exact solution u around the source
  std::vector<double> error;       // |||u − u^(k)||| / |||u|||, k = 1..k_max
  std::vector<double> bound;       // γ^k
  std::vector<double> residual;    // |||ϑP̃(f − Au^(k−1))|||
  std::vector<std::size_t> support;  // support cells of u^(k)
  bool support_contained = true;   // supp u^(k) ⊆ k-layer dilation of the source, every k
  double error_rate = 0.0;         // fitted decay of the error curve per step
  double error_fit_quality = 0.0;
};

/// Solve A u = f for the L²-normalised indicator of one ε-cell, directly and
/// by k_max Richardson steps with the ε-local preconditioner.
inline GreenDecay green_decay(const AssembledSystem& sys, const SchwarzPreconditioner& prec, double gamma,
                              std::size_t source_cell, int k_max) {
  const Lattice cells = cell_lattice(sys.sub.grid);
  require(source_cell < cells.size(), "green_decay: source cell out of range");
  require(k_max >= 1, "green_decay: k_max must be >= 1");
  const double cell_volume = std::pow(sys.sub.grid.eps(), sys.sub.grid.d);
  const Vec F = cell_indicator_load(sys, source_cell) / std::sqrt(cell_volume);
  const Vec u = DirectSolver(sys.A).solve(F);
  const double u_norm = energy_norm(sys, u);

  GreenDecay out;
  out.profile = decay_profile(sys, u, {cells.coords(source_cell)}, k_max);
  CellMask source(sys.sub.grid);
  source.set(source_cell);
  Vec uk = Vec::Zero(F.size());
  for (int k = 1; k <= k_max; ++k) {
    const Vec residual = (k == 1) ? F : Vec(F - sys.A * uk);
    const Vec correction = prec.theta * apply_Ptilde(prec, sys, residual);
    uk += correction;
    out.residual.push_back(energy_norm(sys, correction));
    const CellMask supp = support_cells(sys.sub, uk);
    out.support.push_back(supp.count());
    out.support_contained = out.support_contained && supp.subset_of(source.dilated(k));
    out.error.push_back(energy_norm(sys, u - uk) / u_norm);
    out.bound.push_back(std::pow(gamma, k));
  }
  std::vector<double> x;
  for (int k = 1; k <= k_max; ++k) x.push_back(k);
  auto [rate, r2, ok] = detail::decay_fit(x, out.error, 1e-14);
  out.error_rate = rate;
  out.error_fit_quality = ok ? r2 : 0.0;
  return out;
}

}  // namespace anderson
