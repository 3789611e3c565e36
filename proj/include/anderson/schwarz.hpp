#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "anderson/error.hpp"
#include "anderson/fem.hpp"
#include "anderson/geometry.hpp"
#include "anderson/parallel.hpp"
#include "anderson/rng.hpp"

namespace anderson {

/// Interior dofs of the 2ε cube around one ε-vertex; `factor` indexes the
/// shared Cholesky factor of the patch matrix.
struct Patch {
  Coord vertex{0, 0, 0};  // ε-vertex in cell coordinates
  std::vector<std::size_t> dofs;
  std::size_t factor = 0;
};

struct PatchSet {
  SubgridSpec sub;
  std::vector<Patch> patches;
  std::vector<Eigen::LLT<Mat>> factors;

  std::size_t local_size() const { return patches.empty() ? 0 : patches.front().dofs.size(); }
};

namespace detail {

/// Dense patch matrix assembled from element matrices, for the 2^d cell
/// potentials around the vertex (cell pattern bit a = lower/upper along a).
inline Mat patch_matrix(const ElementMatrices& el, int d, int m, const std::vector<double>& pattern) {
  const Lattice local{d, 2 * m + 1};  // non-periodic use: no wrap occurs
  const std::size_t n = local.size();
  Mat full = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const Lattice elems{d, 2 * m};
  for (std::size_t e = 0; e < elems.size(); ++e) {
    const Coord c = elems.coords(e);
    int quadrant = 0;
    for (int a = 0; a < d; ++a) quadrant |= (c[a] >= m ? 1 : 0) << a;
    const double pot = pattern[static_cast<std::size_t>(quadrant)];
    for (int s = 0; s < (1 << d); ++s) {
      Coord cs = c;
      for (int a = 0; a < d; ++a) cs[a] += (s >> a) & 1;
      const auto i = static_cast<Eigen::Index>(local.index(cs));
      for (int t = 0; t < (1 << d); ++t) {
        Coord ct = c;
        for (int a = 0; a < d; ++a) ct[a] += (t >> a) & 1;
        const auto j = static_cast<Eigen::Index>(local.index(ct));
        full(i, j) += el.stiffness(s, t) + pot * el.mass(s, t);
      }
    }
  }
  // Keep the interior nodes, axis 0 fastest.
  std::vector<Eigen::Index> interior;
  for (std::size_t i = 0; i < n; ++i) {
    const Coord c = local.coords(i);
    bool inside = true;
    for (int a = 0; a < d; ++a) inside = inside && c[a] > 0 && c[a] < 2 * m;
    if (inside) interior.push_back(static_cast<Eigen::Index>(i));
  }
  const auto k = static_cast<Eigen::Index>(interior.size());
  Mat out(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) out(i, j) = full(interior[static_cast<std::size_t>(i)], interior[static_cast<std::size_t>(j)]);
  return out;
}

}  // namespace detail

/// One patch per ε-vertex; patches with the same surrounding potential
/// pattern share one factorization.
inline PatchSet build_patches(const AssembledSystem& sys) {
  const SubgridSpec& sub = sys.sub;
  const int d = sub.grid.d;
  const int m = sub.m;
  const Lattice cells = cell_lattice(sub.grid);
  const Lattice nodes = sub.node_lattice();
  const Lattice offsets{d, 2 * m - 1};
  PatchSet set;
  set.sub = sub;
  std::map<std::vector<double>, std::size_t> cache;
  for (std::size_t z = 0; z < cells.size(); ++z) {
    Patch p;
    p.vertex = cells.coords(z);
    std::vector<double> pattern(static_cast<std::size_t>(1 << d));
    for (int s = 0; s < (1 << d); ++s) {
      Coord c = p.vertex;
      for (int a = 0; a < d; ++a) c[a] -= 1 - ((s >> a) & 1);
      pattern[static_cast<std::size_t>(s)] = sys.cell_potential[cells.index(c)];
    }
    p.dofs.reserve(offsets.size());
    for (std::size_t o = 0; o < offsets.size(); ++o) {
      const Coord off = offsets.coords(o);
      Coord x{0, 0, 0};
      for (int a = 0; a < d; ++a) x[a] = p.vertex[a] * m + off[a] - (m - 1);
      p.dofs.push_back(nodes.index(x));
    }
    auto it = cache.find(pattern);
    if (it == cache.end()) {
      Eigen::LLT<Mat> llt(detail::patch_matrix(sys.element, d, m, pattern));
      if (llt.info() != Eigen::Success) throw NumericalFailure("build_patches: patch matrix is not positive definite");
      it = cache.emplace(pattern, set.factors.size()).first;
      set.factors.push_back(std::move(llt));
    }
    p.factor = it->second;
    set.patches.push_back(std::move(p));
  }
  return set;
}

struct TheoreticalConstants {
  double K1 = 1.0;
  double K2 = 1.0;
  double theta = 1.0;
  double gamma_bound = 1.0;
};

/// K2 = 2^d, K1 = 2^{d+1}(1 + c_L² L²), ϑ = 1/(K2 + 1/K1), γ = K2/(1/K1 + K2).
inline TheoreticalConstants theoretical_constants(int d, int L, double c_L) {
  require(c_L >= 0.0, "theoretical_constants: c_L must be >= 0");
  require(L >= 1, "theoretical_constants: L must be >= 1");
  TheoreticalConstants c;
  c.K2 = std::ldexp(1.0, d);
  c.K1 = std::ldexp(1.0, d + 1) * (1.0 + c_L * c_L * L * L);
  c.theta = 1.0 / (c.K2 + 1.0 / c.K1);
  c.gamma_bound = c.K2 / (1.0 / c.K1 + c.K2);
  return c;
}

inline TheoreticalConstants theoretical_constants(const GeometryStats& stats, double c_L) {
  return theoretical_constants(stats.d, stats.L, c_L);
}

/// c_L reproducing an empirical K1 through K1 = 2^{d+1}(1 + c_L² L²), clamped at 0.
inline double calibrate_c_L(double K1_empirical, int d, int L) {
  const double ratio = K1_empirical / std::ldexp(1.0, d + 1) - 1.0;
  return ratio <= 0.0 ? 0.0 : std::sqrt(ratio) / L;
}

enum class ThetaMode { theoretical, adaptive };

/// Additive Schwarz preconditioner: patches plus the Richardson scaling
/// and the number of composed steps used by P̄.
struct SchwarzPreconditioner {
  PatchSet patches;
  ThetaMode mode = ThetaMode::adaptive;
  double theta = 1.0;
  int k_inner = 1;
  TheoreticalConstants constants;
  int threads = 1;
};

/// Vector together with the ε-cells where it may be nonzero.
struct Masked {
  Vec vec;
  CellMask mask;
};

/// Σ_z E_z A_z^{-1} R_z F. Patches whose restriction vanishes are skipped.
inline Vec apply_Ptilde(const SchwarzPreconditioner& prec, const AssembledSystem& sys, const Vec& F) {
  check_dim(sys, F, "apply_Ptilde");
  const auto& set = prec.patches;
  require(set.sub == sys.sub, "apply_Ptilde: preconditioner was built for another subgrid");
  std::vector<Vec> local(set.patches.size());
  parallel_for(set.patches.size(), prec.threads, [&](std::size_t z) {
    const Patch& p = set.patches[z];
    Vec r(static_cast<Eigen::Index>(p.dofs.size()));
    bool nonzero = false;
    for (std::size_t i = 0; i < p.dofs.size(); ++i) {
      r[static_cast<Eigen::Index>(i)] = F[static_cast<Eigen::Index>(p.dofs[i])];
      nonzero = nonzero || r[static_cast<Eigen::Index>(i)] != 0.0;
    }
    if (nonzero) local[z] = set.factors[p.factor].solve(r);
  });
  Vec out = Vec::Zero(F.size());
  for (std::size_t z = 0; z < set.patches.size(); ++z) {
    if (local[z].size() == 0) continue;
    const Patch& p = set.patches[z];
    for (std::size_t i = 0; i < p.dofs.size(); ++i)
      out[static_cast<Eigen::Index>(p.dofs[i])] += local[z][static_cast<Eigen::Index>(i)];
  }
  return out;
}

inline Vec apply_P(const SchwarzPreconditioner& prec, const AssembledSystem& sys, const Vec& v) {
  check_dim(sys, v, "apply_P");
  return apply_Ptilde(prec, sys, sys.A * v);
}

inline Masked apply_Ptilde(const SchwarzPreconditioner& prec, const AssembledSystem& sys, const Masked& F) {
  return {apply_Ptilde(prec, sys, F.vec), F.mask.dilated(1)};
}

inline Masked apply_P(const SchwarzPreconditioner& prec, const AssembledSystem& sys, const Masked& v) {
  return {apply_P(prec, sys, v.vec), v.mask.dilated(1)};
}

struct RichardsonResult {
  Vec u;
  CellMask mask;
  std::vector<double> energy_error;   // |||u − u^(k)||| / |||u|||, when the exact solution is given
  std::vector<double> residual_norm;  // |||P̃(F − A u^(k−1))|||
  std::vector<std::size_t> support_cells;
};

/// u^(k) = u^(k−1) + ϑ P̃(F − A u^(k−1)) from u^(0) = 0; the mask of u^(k)
/// is the k-layer dilation of the load mask.
inline RichardsonResult richardson_solve(const SchwarzPreconditioner& prec, const AssembledSystem& sys, const Vec& F,
                                         const CellMask& load_mask, int steps, const Vec* exact = nullptr,
                                         bool track_support = false) {
  check_dim(sys, F, "richardson_solve");
  require(steps >= 0, "richardson_solve: steps must be >= 0");
  RichardsonResult res;
  res.u = Vec::Zero(F.size());
  res.mask = load_mask;
  const double exact_norm = exact ? energy_norm(sys, *exact) : 0.0;
  for (int k = 1; k <= steps; ++k) {
    const Vec residual = (k == 1) ? F : Vec(F - sys.A * res.u);
    const Vec correction = apply_Ptilde(prec, sys, residual);
    res.u += prec.theta * correction;
    res.mask = res.mask.dilated(1);
    res.residual_norm.push_back(energy_norm(sys, correction));
    if (exact) res.energy_error.push_back(exact_norm > 0 ? energy_norm(sys, *exact - res.u) / exact_norm : 0.0);
    if (track_support) res.support_cells.push_back(anderson::support_cells(sys.sub, res.u).count());
  }
  return res;
}

/// P̄ applied to a load: k_inner Richardson steps, an approximation of A^{-1}F.
inline Masked apply_Pbar(const SchwarzPreconditioner& prec, const AssembledSystem& sys, const Vec& F,
                         const CellMask& load_mask) {
  auto r = richardson_solve(prec, sys, F, load_mask, prec.k_inner);
  return {std::move(r.u), std::move(r.mask)};
}

struct ContractionEstimate {
  double lambda_min = 0.0;  // extreme a-Rayleigh values of P
  double lambda_max = 0.0;
  double gamma = 1.0;  // ‖I − ϑP‖_a for the preconditioner's ϑ
  int iterations = 0;
  bool converged = false;

  double gamma_for(double theta) const {
    return std::max(std::abs(1.0 - theta * lambda_min), std::abs(1.0 - theta * lambda_max));
  }
  double adaptive_theta() const { return 2.0 / (lambda_min + lambda_max); }
};

/// Extreme eigenvalues of P (self-adjoint in the a-inner product) by
/// Lanczos with full a-reorthogonalisation, then γ = ‖I − ϑP‖_a.
inline ContractionEstimate estimate_contraction(const SchwarzPreconditioner& prec, const AssembledSystem& sys,
                                                int iters = 60, std::uint64_t seed = 1, double tol = 1e-8) {
  require(iters >= 1, "estimate_contraction: iters must be >= 1");
  const auto n = static_cast<Eigen::Index>(sys.size());
  const int max_steps = static_cast<int>(std::min<Eigen::Index>(iters, n));
  CounterRng rng(seed, 0xc0);
  Vec q(n);
  for (auto& x : q) x = rng.normal();
  std::vector<Vec> basis, a_basis;  // q_j and A q_j
  std::vector<double> alpha, beta;
  q /= energy_norm(sys, q);
  ContractionEstimate est;
  double prev_min = 0, prev_max = 0;
  for (int j = 0; j < max_steps; ++j) {
    basis.push_back(q);
    a_basis.push_back(sys.A * q);
    Vec w = apply_Ptilde(prec, sys, a_basis.back());
    alpha.push_back(w.dot(a_basis.back()));
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t i = 0; i < basis.size(); ++i) w -= w.dot(a_basis[i]) * basis[i];
    const double b = energy_norm(sys, w);
    // Ritz values of the current tridiagonal matrix.
    const auto k = static_cast<Eigen::Index>(alpha.size());
    Mat T = Mat::Zero(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      T(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < k) T(i, i + 1) = T(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(T, Eigen::EigenvaluesOnly);
    est.lambda_min = es.eigenvalues()(0);
    est.lambda_max = es.eigenvalues()(k - 1);
    est.iterations = j + 1;
    if (j > 0 && std::abs(est.lambda_min - prev_min) <= tol * std::abs(est.lambda_min) &&
        std::abs(est.lambda_max - prev_max) <= tol * std::abs(est.lambda_max)) {
      est.converged = true;
      break;
    }
    prev_min = est.lambda_min;
    prev_max = est.lambda_max;
    if (b <= 1e-12 * std::abs(est.lambda_max)) {
      est.converged = true;  // invariant subspace reached
      break;
    }
    beta.push_back(b);
    q = w / b;
  }
  if (est.iterations == n) est.converged = true;
  est.gamma = est.gamma_for(prec.theta);
  return est;
}

/// Number of composed steps with γ_est^k ≤ target.
inline int compose_Pbar(double gamma_est, double target_gamma) {
  require(target_gamma > 0.0 && target_gamma < 1.0, "compose_Pbar: target gamma must lie in (0, 1)");
  require(gamma_est >= 0.0 && gamma_est < 1.0, "compose_Pbar: gamma estimate must lie in [0, 1)");
  if (gamma_est == 0.0) return 1;
  const double k = std::log(target_gamma) / std::log(gamma_est);
  return std::max(1, static_cast<int>(std::ceil(k - 1e-9)));
}

struct SchwarzOptions {
  ThetaMode mode = ThetaMode::adaptive;
  double c_L = 1.0;
  std::optional<double> target_gamma;  // sets k_inner when given
  int k_inner = 1;
  int lanczos_iters = 60;
  int threads = 1;
  std::uint64_t seed = 1;
};

struct BuiltPreconditioner {
  SchwarzPreconditioner prec;
  ContractionEstimate contraction;  // for the final ϑ
};

inline BuiltPreconditioner build_preconditioner(const AssembledSystem& sys, int L, const SchwarzOptions& opt) {
  BuiltPreconditioner out;
  auto& prec = out.prec;
  prec.patches = build_patches(sys);
  prec.mode = opt.mode;
  prec.threads = opt.threads;
  prec.constants = theoretical_constants(sys.sub.grid.d, L, opt.c_L);
  prec.theta = prec.constants.theta;
  require(opt.k_inner >= 1, "preconditioner: k_inner must be >= 1");
  prec.k_inner = opt.k_inner;
  out.contraction = estimate_contraction(prec, sys, opt.lanczos_iters, opt.seed);
  if (opt.mode == ThetaMode::adaptive) {
    prec.theta = out.contraction.adaptive_theta();
    out.contraction.gamma = out.contraction.gamma_for(prec.theta);
  }
  if (out.contraction.gamma >= 1.0) throw NumericalFailure("preconditioner: estimated contraction is not below 1");
  if (opt.target_gamma) prec.k_inner = compose_Pbar(out.contraction.gamma, *opt.target_gamma);
  return out;
}

}  // namespace anderson
