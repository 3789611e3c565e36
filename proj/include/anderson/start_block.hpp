#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "anderson/error.hpp"
#include "anderson/fem.hpp"
#include "anderson/geometry.hpp"
#include "anderson/oracle.hpp"

namespace anderson {

/// Starting block V^(0) with per-vector support masks. When an oracle
/// spectrum is supplied, C_ij = (u_i, v_j) and ‖C^{-1}‖₁ are filled in.
struct StartBlock {
  std::vector<Vec> vectors;
  std::vector<CellMask> masks;
  std::vector<double> rayleigh;
  std::optional<Mat> C;
  double c_inv_norm = std::numeric_limits<double>::quiet_NaN();

  int size() const { return static_cast<int>(vectors.size()); }
  CellMask union_mask() const {
    CellMask out = masks.front();
    for (const auto& m : masks) out |= m;
    return out;
  }
};

/// A Dirichlet product-sine mode on one α-cuboid.
struct ValleyMode {
  std::size_t valley = 0;
  Coord wave{1, 1, 1};
  double energy = 0.0;  // α + π² Σ (k_a / (ε n_a))²
};

/// All valley modes ordered by their continuous Dirichlet energy (ties:
/// wider valleys first, then valley index). Modes per axis are capped at
/// the number of interior subgrid nodes.
inline std::vector<ValleyMode> valley_modes(const PotentialField& field, const SubgridSpec& sub, int max_count) {
  require(!field.valleys.empty(), "valley_modes: the field has no valley decomposition");
  const int d = field.grid.d;
  const double eps = field.grid.eps();
  std::vector<ValleyMode> modes;
  // Per valley, enumerate waves with energy among the lowest max_count.
  for (std::size_t v = 0; v < field.valleys.size(); ++v) {
    const Cuboid& box = field.valleys[v];
    Coord cap{1, 1, 1};
    for (int a = 0; a < d; ++a) cap[a] = std::min(box.extent[a] * sub.m - 1, max_count);
    if (std::any_of(cap.begin(), cap.begin() + d, [](int c) { return c < 1; })) continue;
    Coord k{1, 1, 1};
    while (true) {
      double e = field.alpha;
      for (int a = 0; a < d; ++a) {
        const double t = std::numbers::pi * k[a] / (eps * box.extent[a]);
        e += t * t;
      }
      modes.push_back(ValleyMode{v, k, e});
      int a = 0;
      for (; a < d; ++a) {
        if (++k[a] <= cap[a]) break;
        k[a] = 1;
      }
      if (a == d) break;
    }
  }
  std::stable_sort(modes.begin(), modes.end(), [&](const ValleyMode& x, const ValleyMode& y) {
    if (x.energy != y.energy) return x.energy < y.energy;
    const int wx = field.valleys[x.valley].min_side(d), wy = field.valleys[y.valley].min_side(d);
    if (wx != wy) return wx > wy;
    return x.valley < y.valley;
  });
  if (static_cast<int>(modes.size()) > max_count) modes.resize(static_cast<std::size_t>(max_count));
  return modes;
}

/// Nodal samples of a valley mode, zero outside the cuboid, M-normalised.
inline Vec sample_valley_mode(const AssembledSystem& sys, const Cuboid& box, const Coord& wave) {
  const SubgridSpec& sub = sys.sub;
  const Lattice nodes = sub.node_lattice();
  Vec v = Vec::Zero(static_cast<Eigen::Index>(nodes.size()));
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Coord x = nodes.coords(i);
    double val = 1.0;
    for (int a = 0; a < sub.grid.d && val != 0.0; ++a) {
      const int span = box.extent[a] * sub.m;
      const int t = nodes.wrap(x[a] - box.anchor[a] * sub.m);
      val *= (t > 0 && t < span) ? std::sin(std::numbers::pi * wave[a] * t / span) : 0.0;
    }
    v[static_cast<Eigen::Index>(i)] = val;
  }
  const double norm = l2_norm(sys, v);
  require(norm > 0.0, "sample_valley_mode: mode vanishes on the subgrid");
  return v / norm;
}

/// Fill C and ‖C^{-1}‖₁ from the first K oracle eigenvectors.
inline void attach_coefficients(StartBlock& block, const AssembledSystem& sys, const Spectrum& oracle) {
  const int K = block.size();
  require(oracle.size() >= K, "start block: oracle has fewer than K eigenpairs");
  Mat C(K, K);
  for (int j = 0; j < K; ++j) {
    const Vec Mv = sys.M * block.vectors[static_cast<std::size_t>(j)];
    for (int i = 0; i < K; ++i) C(i, j) = oracle.vectors.col(i).dot(Mv);
  }
  Eigen::JacobiSVD<Mat> svd(C);
  const Vec sv = svd.singularValues();
  if (sv(K - 1) <= 1e-12 * sv(0))
    throw NumericalFailure("start block: coefficient matrix C is numerically singular (condition estimate " +
                           std::to_string(sv(0) / std::max(sv(K - 1), 1e-300)) + ")");
  block.C = C;
  block.c_inv_norm = C.inverse().cwiseAbs().colwise().sum().maxCoeff();
}

/// K valley Dirichlet modes, lowest continuous energy first.
inline StartBlock build_start_valleys(const PotentialField& field, const AssembledSystem& sys, int K,
                                      const Spectrum* oracle = nullptr) {
  require(K >= 1, "build_start_valleys: K must be >= 1");
  const auto modes = valley_modes(field, sys.sub, K);
  require(static_cast<int>(modes.size()) >= K, "build_start_valleys: K = " + std::to_string(K) +
                                                   " exceeds the " + std::to_string(modes.size()) +
                                                   " available valley modes");
  StartBlock block;
  const Lattice cells = cell_lattice(field.grid);
  for (const auto& mode : modes) {
    const Cuboid& box = field.valleys[mode.valley];
    block.vectors.push_back(sample_valley_mode(sys, box, mode.wave));
    CellMask mask(field.grid);
    for_each_cell(cells, box, [&](std::size_t c) { mask.set(c); });
    block.masks.push_back(std::move(mask));
    block.rayleigh.push_back(rayleigh(sys, block.vectors.back()));
  }
  if (oracle) attach_coefficients(block, sys, *oracle);
  return block;
}

/// Q1 hat functions on the coarse grid of `spacing` subgrid nodes whose
/// support lies inside the masked cells, interpolated to the subgrid.
inline std::vector<Vec> coarse_hat_basis(const SubgridSpec& sub, const CellMask& space, int spacing) {
  require(spacing >= 1 && sub.nodes_per_axis() % spacing == 0,
          "coarse_hat_basis: spacing must divide the number of nodes per axis");
  const Lattice nodes = sub.node_lattice();
  const Lattice coarse{sub.grid.d, sub.nodes_per_axis() / spacing};
  const Lattice offsets{sub.grid.d, 2 * spacing + 1};
  std::vector<Vec> basis;
  for (std::size_t c = 0; c < coarse.size(); ++c) {
    const Coord cc = coarse.coords(c);
    Vec hat = Vec::Zero(static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t o = 0; o < offsets.size(); ++o) {
      const Coord off = offsets.coords(o);
      Coord x{0, 0, 0};
      double val = 1.0;
      for (int a = 0; a < sub.grid.d; ++a) {
        const int r = off[a] - spacing;
        x[a] = cc[a] * spacing + r;
        val *= 1.0 - std::abs(static_cast<double>(r)) / spacing;
      }
      if (val != 0.0) hat[static_cast<Eigen::Index>(nodes.index(x))] = val;
    }
    if (!support_cells(sub, hat).subset_of(space)) continue;
    basis.push_back(std::move(hat));
  }
  return basis;
}

/// V^(0) = L²-projection of the first K oracle eigenvectors onto the span
/// of `basis`; verification mode only.
inline StartBlock build_start_projection(const AssembledSystem& sys, const Spectrum& oracle,
                                         const std::vector<Vec>& basis, const CellMask& space, int K) {
  require(K >= 1 && K <= oracle.size(), "build_start_projection: K out of range");
  require(!basis.empty(), "build_start_projection: empty local space");
  const auto n = static_cast<Eigen::Index>(sys.size());
  Mat B(n, static_cast<Eigen::Index>(basis.size()));
  for (std::size_t j = 0; j < basis.size(); ++j) B.col(static_cast<Eigen::Index>(j)) = basis[j];
  const Mat MB = sys.M * B;
  const Mat G = B.transpose() * MB;
  Eigen::LDLT<Mat> gram(G);
  StartBlock block;
  for (int j = 0; j < K; ++j) {
    const Vec coeff = gram.solve(MB.transpose() * oracle.vectors.col(j));
    block.vectors.push_back(B * coeff);
    block.masks.push_back(space);
    block.rayleigh.push_back(block.vectors.back().squaredNorm() > 0 ? rayleigh(sys, block.vectors.back())
                                                                     : std::numeric_limits<double>::infinity());
  }
  attach_coefficients(block, sys, oracle);
  return block;
}

/// Largest Ritz value of (A, M) on span(vectors): the min-max bound
/// E^N ≤ this value for N linearly independent vectors.
inline double span_rayleigh_max(const AssembledSystem& sys, const std::vector<Vec>& vectors) {
  require(!vectors.empty(), "span_rayleigh_max: no vectors");
  const auto k = static_cast<Eigen::Index>(vectors.size());
  Mat V(static_cast<Eigen::Index>(sys.size()), k);
  for (Eigen::Index j = 0; j < k; ++j) V.col(j) = vectors[static_cast<std::size_t>(j)];
  Mat H = V.transpose() * (sys.A * V);
  Mat G = V.transpose() * (sys.M * V);
  H = 0.5 * (H + H.transpose()).eval();
  G = 0.5 * (G + G.transpose()).eval();
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(H, G, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalFailure("span_rayleigh_max: vectors are linearly dependent");
  return es.eigenvalues()(k - 1);
}

}  // namespace anderson
