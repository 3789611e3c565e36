#pragma once

#include <Eigen/Eigenvalues>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "anderson/error.hpp"
#include "anderson/fem.hpp"
#include "anderson/parallel.hpp"
#include "anderson/schwarz.hpp"
#include "anderson/start_block.hpp"

namespace anderson {

/// min_c |||v − c u₁||| via the a-orthogonal projection onto span(u₁).
inline double projection_error(const AssembledSystem& sys, const Vec& v, const Vec& u1) {
  const Vec Au1 = sys.A * u1;
  const double c = v.dot(Au1) / u1.dot(Au1);
  return energy_norm(sys, v - c * u1);
}

struct IterationState {
  std::vector<Vec> block;
  std::vector<CellMask> masks;
  std::vector<double> history;  // err^(k), k = 0, 1, ... (when u₁ is known)
  std::vector<double> distance;  // |||ṽ^(k) − u₁||| without re-scaling
  std::vector<std::size_t> support;  // support cells of the combined vector
  std::vector<double> scaling;  // E used in each step
  Vec combined;  // ṽ^(k)

  std::vector<double> rates() const {
    std::vector<double> r;
    for (std::size_t k = 1; k < history.size(); ++k) r.push_back(history[k - 1] > 0 ? history[k] / history[k - 1] : 0.0);
    return r;
  }
};

namespace detail {

inline void record(IterationState& st, const AssembledSystem& sys, const Vec& v, const CellMask& mask,
                   const Vec* u1) {
  st.combined = v;
  if (u1) {
    st.history.push_back(projection_error(sys, v, *u1));
    st.distance.push_back(energy_norm(sys, v - *u1));
  }
  (void)mask;
  st.support.push_back(support_cells(sys.sub, v).count());
}

inline double scaling_for(const AssembledSystem& sys, const std::optional<double>& E1, const Vec& v) {
  return E1 ? *E1 : rayleigh(sys, v);
}

}  // namespace detail

/// v^(k) = E A^{-1} M v^(k−1) with global direct solves.
inline IterationState inverse_power(const AssembledSystem& sys, std::optional<double> E1, const Vec& v0, int steps,
                                    const Vec* u1 = nullptr) {
  check_dim(sys, v0, "inverse_power");
  require(steps >= 0, "inverse_power: steps must be >= 0");
  const DirectSolver solver(sys.A);
  IterationState st;
  Vec v = v0;
  const CellMask all(sys.sub.grid, true);
  st.block = {v};
  st.masks = {all};
  detail::record(st, sys, v, all, u1);
  for (int k = 0; k < steps; ++k) {
    const double E = detail::scaling_for(sys, E1, v);
    st.scaling.push_back(E);
    v = E * solver.solve(sys.M * v);
    detail::record(st, sys, v, all, u1);
  }
  st.block = {v};
  return st;
}

/// One preconditioned inverse iteration step
/// ṽ ← ṽ + P̄(E A^{-1}M ṽ − ṽ) = ṽ + Richardson_k(E M ṽ − A ṽ).
inline Masked pinvit_step(const SchwarzPreconditioner& prec, const AssembledSystem& sys, double E, const Masked& v) {
  const Vec F = E * (sys.M * v.vec) - sys.A * v.vec;
  Masked corr = apply_Pbar(prec, sys, F, v.mask);
  corr.vec += v.vec;
  return corr;
}

inline IterationState pinvit(const SchwarzPreconditioner& prec, const AssembledSystem& sys, std::optional<double> E1,
                             const Vec& v0, const CellMask& mask0, int steps, const Vec* u1 = nullptr) {
  check_dim(sys, v0, "pinvit");
  require(steps >= 0, "pinvit: steps must be >= 0");
  IterationState st;
  Masked v{v0, mask0};
  detail::record(st, sys, v.vec, v.mask, u1);
  for (int k = 0; k < steps; ++k) {
    const double E = detail::scaling_for(sys, E1, v.vec);
    st.scaling.push_back(E);
    v = pinvit_step(prec, sys, E, v);
    detail::record(st, sys, v.vec, v.mask, u1);
  }
  st.block = {v.vec};
  st.masks = {v.mask};
  return st;
}

/// Combination weights: x = C^{-1}e₁ when C is known, otherwise the
/// lowest Ritz vector of (A, M) on span(block).
inline Vec combination_weights(const AssembledSystem& sys, const std::vector<Vec>& block, const StartBlock& start) {
  const auto K = static_cast<Eigen::Index>(block.size());
  if (start.C) return start.C->partialPivLu().solve(Vec::Unit(K, 0));
  Mat V(static_cast<Eigen::Index>(sys.size()), K);
  for (Eigen::Index j = 0; j < K; ++j) V.col(j) = block[static_cast<std::size_t>(j)];
  Mat H = V.transpose() * (sys.A * V);
  Mat G = V.transpose() * (sys.M * V);
  H = 0.5 * (H + H.transpose()).eval();
  G = 0.5 * (G + G.transpose()).eval();
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(H, G);
  if (es.info() != Eigen::Success) throw NumericalFailure("block iteration: block became linearly dependent");
  Vec x = es.eigenvectors().col(0);
  const Vec v = V * x;
  x /= std::sqrt(v.dot(sys.M * v));
  return x;
}

inline Vec combine(const std::vector<Vec>& block, const Vec& x) {
  Vec v = x[0] * block[0];
  for (std::size_t j = 1; j < block.size(); ++j) v += x[static_cast<Eigen::Index>(j)] * block[j];
  return v;
}

/// Simultaneous inverse iteration V^(k) = (E A^{-1} M)^k V^(0), tracking
/// V^(k)x.
inline IterationState block_iteration(const AssembledSystem& sys, double E1, const StartBlock& start, int steps,
                                      const Vec* u1 = nullptr, int threads = 1) {
  require(start.size() >= 1, "block_iteration: empty start block");
  require(steps >= 0, "block_iteration: steps must be >= 0");
  if (start.C) {
    Eigen::JacobiSVD<Mat> svd(*start.C);
    const Vec sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 1e-12 * sv(0))
      throw NumericalFailure("block_iteration: coefficient matrix C of the starting block is singular");
  }
  const DirectSolver solver(sys.A);
  IterationState st;
  st.block = start.vectors;
  st.masks.assign(start.vectors.size(), CellMask(sys.sub.grid, true));
  Vec x = combination_weights(sys, st.block, start);
  detail::record(st, sys, combine(st.block, x), st.masks.front(), u1);
  for (int k = 0; k < steps; ++k) {
    st.scaling.push_back(E1);
    parallel_for(st.block.size(), threads, [&](std::size_t j) { st.block[j] = E1 * solver.solve(sys.M * st.block[j]); });
    if (!start.C) x = combination_weights(sys, st.block, start);
    detail::record(st, sys, combine(st.block, x), st.masks.front(), u1);
  }
  return st;
}

struct InexactResult {
  Vec v;  // ṽ = Ṽ^(k) x
  CellMask mask;
  int steps = 0;           // k
  double gamma_bar = 0.0;  // contraction of P̄
  IterationState state;
  std::vector<double> exact_gap;  // max_j |||v_j^(k) − ṽ_j^(k)||| when tracked
};

/// Number of block steps k = ⌈log(1/tol)/log(1/gap)⌉.
inline int block_steps_for(double tol, double gap) {
  require(tol > 0.0 && tol <= 1.0, "inexact block iteration: tol must lie in (0, 1]");
  require(gap > 0.0 && gap < 1.0, "inexact block iteration: gap must lie in (0, 1)");
  if (tol == 1.0) return 0;
  return static_cast<int>(std::ceil(std::log(1.0 / tol) / std::log(1.0 / gap) - 1e-12));
}

/// Smallest k_inner with γ_P^{k_inner} ≤ gap^k.
inline int k_inner_for(double gamma_P, double gap, int k) {
  if (k == 0) return 1;
  return compose_Pbar(gamma_P, std::pow(gap, k));
}

/// k preconditioned block steps Ṽ ← Ṽ + P̄(E A^{-1}M Ṽ − Ṽ); needs
/// γ_P^{k_inner} ≤ gap^k.
inline InexactResult inexact_block_iteration(const SchwarzPreconditioner& prec, double gamma_P,
                                             const AssembledSystem& sys, std::optional<double> E1,
                                             const StartBlock& start, double tol, double gap,
                                             const Vec* u1 = nullptr, bool track_exact = false) {
  require(start.size() >= 1, "inexact block iteration: empty start block");
  InexactResult res;
  res.steps = block_steps_for(tol, gap);
  res.gamma_bar = std::pow(gamma_P, prec.k_inner);
  const double needed = std::pow(gap, res.steps);
  if (res.steps > 0 && res.gamma_bar > needed * (1 + 1e-12))
    throw NumericalFailure("inexact block iteration: preconditioner contraction " + std::to_string(res.gamma_bar) +
                           " exceeds gap^k = " + std::to_string(needed) + "; increase k_inner to at least " +
                           std::to_string(k_inner_for(gamma_P, gap, res.steps)));
  auto& st = res.state;
  st.block = start.vectors;
  st.masks = start.masks;
  std::vector<Vec> exact = start.vectors;
  std::optional<DirectSolver> solver;
  if (track_exact) solver.emplace(sys.A);
  Vec x = combination_weights(sys, st.block, start);
  detail::record(st, sys, combine(st.block, x), start.union_mask(), u1);
  if (track_exact) res.exact_gap.push_back(0.0);
  for (int k = 0; k < res.steps; ++k) {
    const double E = detail::scaling_for(sys, E1, combine(st.block, x));
    st.scaling.push_back(E);
    // Per-vector updates are independent; patch solves stay serial inside.
    SchwarzPreconditioner inner = prec;
    inner.threads = 1;
    parallel_for(st.block.size(), prec.threads, [&](std::size_t j) {
      Masked next = pinvit_step(inner, sys, E, Masked{st.block[j], st.masks[j]});
      st.block[j] = std::move(next.vec);
      st.masks[j] = std::move(next.mask);
    });
    if (track_exact) {
      double worst = 0.0;
      for (std::size_t j = 0; j < exact.size(); ++j) {
        exact[j] = E * solver->solve(sys.M * exact[j]);
        worst = std::max(worst, energy_norm(sys, exact[j] - st.block[j]));
      }
      res.exact_gap.push_back(worst);
    }
    if (!start.C) x = combination_weights(sys, st.block, start);
    CellMask all_masks = st.masks.front();
    for (const auto& m : st.masks) all_masks |= m;
    detail::record(st, sys, combine(st.block, x), all_masks, u1);
  }
  res.v = st.combined;
  res.mask = st.masks.front();
  for (const auto& m : st.masks) res.mask |= m;
  return res;
}

}  // namespace anderson
