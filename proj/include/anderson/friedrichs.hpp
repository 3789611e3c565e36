#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "anderson/error.hpp"
#include "anderson/fem.hpp"
#include "anderson/rng.hpp"

namespace anderson {

struct FriedrichsReport {
  double max_ratio = 0.0;  // max over samples of ‖ηv‖ / ‖∇(ηv)‖
  double sup_ratio = 0.0;  // exact supremum over the discrete space
  double eps = 0.0;
  int L = 1;
  int samples = 0;
  int skipped = 0;  // samples with ∇(ηv) = 0

  double max_over_eps_L() const { return max_ratio / (eps * L); }
  double sup_over_eps_L() const { return sup_ratio / (eps * L); }
};

namespace detail {

/// Indices of the nodes where η > 0.
inline std::vector<Eigen::Index> cutoff_support(const CutoffField& cutoff) {
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < cutoff.eta.size(); ++i)
    if (cutoff.eta[i] > 0.0) keep.push_back(static_cast<Eigen::Index>(i));
  return keep;
}

inline SpMat restrict_to(const SpMat& A, const std::vector<Eigen::Index>& keep) {
  std::vector<Eigen::Index> pos(static_cast<std::size_t>(A.rows()), -1);
  for (std::size_t i = 0; i < keep.size(); ++i) pos[static_cast<std::size_t>(keep[i])] = static_cast<Eigen::Index>(i);
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index col = 0; col < A.outerSize(); ++col)
    for (SpMat::InnerIterator it(A, col); it; ++it) {
      const auto r = pos[static_cast<std::size_t>(it.row())], c = pos[static_cast<std::size_t>(it.col())];
      if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
    }
  const auto n = static_cast<Eigen::Index>(keep.size());
  SpMat out(n, n);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

}  // namespace detail

/// sup ‖w‖/‖∇w‖ over nodal functions w = ηv: the nodal products are exactly
/// the functions vanishing where η = 0, so the supremum is λ_min(K_S, M_S)^{-1/2}
/// on the remaining nodes S (inverse iteration from a positive start).
inline double friedrichs_sup(const AssembledSystem& sys, const CutoffField& cutoff) {
  const auto keep = detail::cutoff_support(cutoff);
  if (keep.empty()) return 0.0;
  if (keep.size() == sys.size()) return std::numeric_limits<double>::infinity();
  const SpMat K = detail::restrict_to(sys.K, keep);
  const SpMat M = detail::restrict_to(sys.M, keep);
  const DirectSolver solver(K);
  Vec x = Vec::Ones(K.rows());
  double lambda = x.dot(K * x) / x.dot(M * x);
  for (int it = 0; it < 2000; ++it) {
    x = solver.solve(M * x);
    x /= std::sqrt(x.dot(M * x));
    const double next = x.dot(K * x);
    const bool done = std::abs(next - lambda) <= 1e-13 * next;
    lambda = next;
    if (done) break;
  }
  return 1.0 / std::sqrt(lambda);
}

/// ‖ηv‖/‖∇(ηv)‖, or nothing when ∇(ηv) = 0.
inline std::optional<double> friedrichs_sample_ratio(const AssembledSystem& sys, const CutoffField& cutoff,
                                                     const Vec& v) {
  const Vec w = apply_cutoff(cutoff, v);
  const double grad = std::sqrt(std::max(0.0, w.dot(sys.K * w)));
  if (grad == 0.0) return std::nullopt;
  return std::sqrt(std::max(0.0, w.dot(sys.M * w))) / grad;
}

/// Max ‖ηv‖/‖∇(ηv)‖ over random v smoothed by (K+M)^{-1}M `smoothing`
/// times (domain-scale correlation), alongside the exact supremum.
inline FriedrichsReport friedrichs_ratio(const AssembledSystem& sys, const CutoffField& cutoff, int samples, int L,
                                         std::uint64_t seed = 1, int smoothing = 2) {
  require(samples >= 1, "friedrichs_ratio: samples must be >= 1");
  require(static_cast<std::size_t>(cutoff.eta.size()) == sys.size(), "friedrichs_ratio: cutoff built for another subgrid");
  FriedrichsReport rep;
  rep.eps = sys.sub.grid.eps();
  rep.L = L;
  rep.samples = samples;
  const SpMat KM = sys.K + sys.M;
  const DirectSolver smoother(KM);
  CounterRng rng(seed, 0xf1);
  for (int s = 0; s < samples; ++s) {
    Vec v(static_cast<Eigen::Index>(sys.size()));
    for (auto& x : v) x = rng.normal();
    for (int k = 0; k < smoothing; ++k) v = smoother.solve(sys.M * v);
    if (const auto r = friedrichs_sample_ratio(sys, cutoff, v))
      rep.max_ratio = std::max(rep.max_ratio, *r);
    else
      ++rep.skipped;
  }
  rep.sup_ratio = friedrichs_sup(sys, cutoff);
  return rep;
}

}  // namespace anderson
