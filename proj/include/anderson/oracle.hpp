#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "anderson/error.hpp"
#include "anderson/fem.hpp"
#include "anderson/rng.hpp"

namespace anderson {

/// Lowest eigenpairs of the pencil (A, M), eigenvectors M-orthonormal.
struct Spectrum {
  Vec values;
  Mat vectors;  // one column per eigenvalue
  Vec residuals;  // ‖Av − λMv‖ / (|λ| ‖Mv‖)
  std::string method;
  double tolerance = 0.0;

  int size() const { return static_cast<int>(values.size()); }
  Vec vector(int i) const { return vectors.col(i); }
};

inline constexpr std::size_t kDefaultDenseLimit = 4096;
// Above this size the O(n³) dense solve loses to shift-invert by orders of
// magnitude, so oracle_spectrum routes there even when dense is allowed.
inline constexpr std::size_t kAutoDenseSize = 512;

namespace detail {

/// Fix the sign so the entry of largest magnitude is positive (ties go to
/// the lowest index), for reproducible output.
inline void canonical_sign(Eigen::Ref<Vec> v) {
  Eigen::Index arg = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) > best * (1 + 1e-12)) {
      best = std::abs(v[i]);
      arg = i;
    }
  if (v[arg] < 0) v = -v;
}

inline Vec residuals(const AssembledSystem& sys, const Vec& values, const Mat& vectors) {
  Vec out(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const Vec v = vectors.col(i);
    const Vec Mv = sys.M * v;
    const double denom = std::max(std::abs(values[i]), 1e-300) * Mv.norm();
    out[i] = (sys.A * v - values[i] * Mv).norm() / denom;
  }
  return out;
}

}  // namespace detail

/// Full dense symmetric-definite solve; for small systems only.
inline Spectrum dense_oracle(const AssembledSystem& sys, int n_ev, std::size_t dense_limit = kDefaultDenseLimit) {
  const std::size_t n = sys.size();
  require(n <= dense_limit, "dense_oracle: " + std::to_string(n) + " dofs exceed the dense limit " +
                                std::to_string(dense_limit) + "; use shift_invert_oracle instead");
  require(n_ev >= 1 && static_cast<std::size_t>(n_ev) <= n, "dense_oracle: n_ev out of range");
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(Mat(sys.A), Mat(sys.M));
  if (es.info() != Eigen::Success) throw NumericalFailure("dense_oracle: eigensolver failed");
  Spectrum s;
  s.method = "dense";
  s.values = es.eigenvalues().head(n_ev);
  s.vectors = es.eigenvectors().leftCols(n_ev);
  for (int i = 0; i < n_ev; ++i) {
    s.vectors.col(i) /= std::sqrt(s.vectors.col(i).dot(sys.M * s.vectors.col(i)));
    detail::canonical_sign(s.vectors.col(i));
  }
  s.residuals = detail::residuals(sys, s.values, s.vectors);
  s.tolerance = s.residuals.size() ? s.residuals.maxCoeff() : 0.0;
  return s;
}

struct ShiftInvertOptions {
  double tol = 1e-10;     // relative residual certificate
  int extra = 8;          // block size beyond n_ev
  int krylov_depth = 4;   // block Krylov steps per restart
  int max_restarts = 200;
  std::uint64_t seed = 7;
};

/// Block Krylov iteration on (A − σM)^{-1}M with thick restart and
/// Rayleigh–Ritz on (A, M). Returns the n_ev eigenvalues above and closest
/// to σ (the lowest ones when σ lies below the spectrum).
inline Spectrum shift_invert_oracle(const AssembledSystem& sys, int n_ev, double shift,
                                    const ShiftInvertOptions& opt = {}) {
  const auto n = static_cast<Eigen::Index>(sys.size());
  require(n_ev >= 1 && n_ev <= n, "shift_invert_oracle: n_ev out of range");
  // Factorise A − σM, nudging σ when it hits an eigenvalue.
  double sigma = shift;
  std::unique_ptr<Eigen::SimplicialLDLT<SpMat>> ldlt;
  for (int attempt = 0; attempt < 4; ++attempt) {
    SpMat shifted = sys.A - sigma * sys.M;
    ldlt = std::make_unique<Eigen::SimplicialLDLT<SpMat>>(shifted);
    bool ok = ldlt->info() == Eigen::Success;
    if (ok) {
      const Vec D = ldlt->vectorD();
      const double scale = D.cwiseAbs().maxCoeff();
      ok = D.cwiseAbs().minCoeff() > 1e-13 * scale;
    }
    if (ok) break;
    ldlt.reset();
    sigma -= 1e-6 * std::max(1.0, std::abs(sigma)) * (attempt + 1);
  }
  if (!ldlt) throw NumericalFailure("shift_invert_oracle: A − σM could not be factorised near σ");

  const int block = static_cast<int>(std::min<Eigen::Index>(n_ev + opt.extra, n));
  CounterRng rng(opt.seed, 0x51);
  Mat V(n, block);
  for (Eigen::Index i = 0; i < V.size(); ++i) V.data()[i] = rng.normal();

  // M-orthonormalise the columns of W against `basis` and themselves;
  // near-dependent columns are dropped.
  auto orthonormalise = [&](const Mat& basis, Mat W) {
    std::vector<Vec> kept;
    const Mat MB = sys.M * basis;
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      Vec w = W.col(j);
      const double before = std::sqrt(std::max(0.0, w.dot(sys.M * w)));
      for (int pass = 0; pass < 2; ++pass) {
        if (basis.cols() > 0) w -= basis * (MB.transpose() * w);
        for (const auto& q : kept) w -= q.dot(sys.M * w) * q;
      }
      const double after = std::sqrt(std::max(0.0, w.dot(sys.M * w)));
      if (after > 1e-14 * before && after > 0) kept.push_back(w / after);
    }
    Mat out(n, static_cast<Eigen::Index>(kept.size()));
    for (std::size_t j = 0; j < kept.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = kept[j];
    return out;
  };

  Spectrum s;
  s.method = "shift-invert";
  s.tolerance = opt.tol;
  V = orthonormalise(Mat(n, 0), V);
  for (int restart = 0; restart <= opt.max_restarts; ++restart) {
    Mat basis = V;
    Mat last = V;
    for (int depth = 0; depth < opt.krylov_depth && basis.cols() < n; ++depth) {
      Mat W(n, last.cols());
      for (Eigen::Index j = 0; j < last.cols(); ++j) W.col(j) = ldlt->solve(Vec(sys.M * last.col(j)));
      Mat fresh = orthonormalise(basis, W);
      if (fresh.cols() == 0) break;
      Mat grown(n, basis.cols() + fresh.cols());
      grown << basis, fresh;
      basis = std::move(grown);
      last = std::move(fresh);
    }
    // Rayleigh–Ritz on (A, M) over the basis.
    Mat H = basis.transpose() * (sys.A * basis);
    Mat G = basis.transpose() * (sys.M * basis);
    H = 0.5 * (H + H.transpose()).eval();
    G = 0.5 * (G + G.transpose()).eval();
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(H, G);
    if (es.info() != Eigen::Success) throw NumericalFailure("shift_invert_oracle: Rayleigh–Ritz failed");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(es.eigenvalues().size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const Vec& theta = es.eigenvalues();
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      const bool above_a = theta[a] >= sigma, above_b = theta[b] >= sigma;
      if (above_a != above_b) return above_a;
      return std::abs(theta[a] - sigma) < std::abs(theta[b] - sigma);
    });
    const int keep = static_cast<int>(std::min<Eigen::Index>(block, theta.size()));
    Mat ritz(n, keep);
    Vec values(keep);
    for (int j = 0; j < keep; ++j) {
      values[j] = theta[order[static_cast<std::size_t>(j)]];
      ritz.col(j) = basis * es.eigenvectors().col(order[static_cast<std::size_t>(j)]);
    }
    // Ascending order within the wanted set.
    std::vector<int> idx(static_cast<std::size_t>(std::min(n_ev, keep)));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return values[a] < values[b]; });
    s.values.resize(static_cast<Eigen::Index>(idx.size()));
    s.vectors.resize(n, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      s.values[static_cast<Eigen::Index>(j)] = values[idx[j]];
      Vec v = ritz.col(idx[j]);
      v /= std::sqrt(v.dot(sys.M * v));
      s.vectors.col(static_cast<Eigen::Index>(j)) = v;
    }
    s.residuals = detail::residuals(sys, s.values, s.vectors);
    if (s.values.size() == n_ev && s.residuals.maxCoeff() <= opt.tol) {
      for (int j = 0; j < n_ev; ++j) detail::canonical_sign(s.vectors.col(j));
      return s;
    }
    V = orthonormalise(Mat(n, 0), ritz);
  }
  throw NumericalFailure("shift_invert_oracle: no convergence to residual " + std::to_string(opt.tol) + " (reached " +
                         std::to_string(s.residuals.size() ? s.residuals.maxCoeff() : 1.0) + ")");
}

/// Dense solve when small enough, shift-invert from σ = 0 otherwise
/// (A is positive definite, so 0 lies below the spectrum). Dense also
/// when nearly the whole spectrum is asked for.
inline Spectrum oracle_spectrum(const AssembledSystem& sys, int n_ev, std::size_t dense_limit = kDefaultDenseLimit) {
  const bool small = sys.size() <= std::min(dense_limit, kAutoDenseSize);
  const bool most = sys.size() <= dense_limit && 4 * static_cast<std::size_t>(n_ev) >= sys.size();
  if (small || most) return dense_oracle(sys, n_ev, dense_limit);
  return shift_invert_oracle(sys, n_ev, 0.0);
}

}  // namespace anderson
