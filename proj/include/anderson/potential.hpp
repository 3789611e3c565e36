#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "anderson/error.hpp"
#include "anderson/grid.hpp"
#include "anderson/rng.hpp"

namespace anderson {

enum class FieldKind { periodic, iid, tensor, domino, planted, custom };

inline std::string to_string(FieldKind k) {
  switch (k) {
    case FieldKind::periodic: return "periodic";
    case FieldKind::iid: return "iid";
    case FieldKind::tensor: return "tensor";
    case FieldKind::domino: return "domino";
    case FieldKind::planted: return "planted";
    case FieldKind::custom: return "custom";
  }
  return "custom";
}

inline FieldKind field_kind_from_string(const std::string& s) {
  if (s == "periodic") return FieldKind::periodic;
  if (s == "iid") return FieldKind::iid;
  if (s == "tensor") return FieldKind::tensor;
  if (s == "domino") return FieldKind::domino;
  if (s == "planted") return FieldKind::planted;
  if (s == "custom") return FieldKind::custom;
  throw InvalidArgument("unknown field kind '" + s + "'");
}

/// Axis-aligned box of ε-cells on the torus (anchor = lowest corner,
/// possibly wrapping). Unused axes carry extent 1.
struct Cuboid {
  Coord anchor{0, 0, 0};
  Coord extent{1, 1, 1};

  int min_side(int d) const { return *std::min_element(extent.begin(), extent.begin() + d); }
  int max_side(int d) const { return *std::max_element(extent.begin(), extent.begin() + d); }

  std::size_t volume(int d) const {
    std::size_t v = 1;
    for (int i = 0; i < d; ++i) v *= static_cast<std::size_t>(extent[i]);
    return v;
  }

  bool operator==(const Cuboid&) const = default;
};

/// Visit the linear cell index of every cell in `box` (torus wrap).
template <class Fn>
void for_each_cell(const Lattice& lat, const Cuboid& box, Fn&& fn) {
  Coord off{0, 0, 0};
  const std::size_t vol = box.volume(lat.d);
  for (std::size_t k = 0; k < vol; ++k) {
    Coord c{0, 0, 0};
    for (int i = 0; i < lat.d; ++i) c[i] = box.anchor[i] + off[i];
    fn(lat.index(c));
    for (int i = 0; i < lat.d; ++i) {
      if (++off[i] < box.extent[i]) break;
      off[i] = 0;
    }
  }
}

struct Amplitudes {
  double alpha = 1.0;
  double beta = 1.0;

  void validate() const {
    require(alpha >= 0.0, "potential: alpha must be >= 0");
    require(beta > 0.0, "potential: beta must be > 0");
    require(alpha <= beta, "potential: alpha must not exceed beta");
  }
};

/// Two-valued cellwise-constant potential on the ε-torus.
struct PotentialField {
  GridSpec grid;
  std::vector<std::uint8_t> occupancy;  // 1 = β-cell, 0 = α-cell
  double alpha = 1.0;
  double beta = 1.0;
  FieldKind kind = FieldKind::custom;
  /// Known rectangular α-valley decomposition (tensor, domino, planted,
  /// periodic, and any d=1 field). Empty when not available.
  std::vector<Cuboid> valleys;

  std::size_t num_cells() const { return occupancy.size(); }
  bool is_beta(std::size_t cell) const { return occupancy[cell] != 0; }
  double value(std::size_t cell) const { return is_beta(cell) ? beta : alpha; }
  std::size_t beta_count() const {
    return static_cast<std::size_t>(std::count(occupancy.begin(), occupancy.end(), std::uint8_t{1}));
  }
  CellMask alpha_mask() const {
    CellMask m(grid);
    for (std::size_t i = 0; i < occupancy.size(); ++i)
      if (!occupancy[i]) m.set(i);
    return m;
  }
};

namespace detail {

inline PotentialField blank_field(const GridSpec& grid, const Amplitudes& amp, FieldKind kind, bool beta_everywhere) {
  grid.validate();
  amp.validate();
  PotentialField f;
  f.grid = grid;
  f.alpha = amp.alpha;
  f.beta = amp.beta;
  f.kind = kind;
  f.occupancy.assign(grid.num_cells(), beta_everywhere ? 1 : 0);
  return f;
}

/// Maximal cyclic runs of ones in a 0/1 sequence: (start, length).
inline std::vector<std::pair<int, int>> cyclic_runs(const std::vector<std::uint8_t>& seq) {
  const int n = static_cast<int>(seq.size());
  std::vector<std::pair<int, int>> runs;
  if (std::all_of(seq.begin(), seq.end(), [](auto v) { return v != 0; })) {
    runs.emplace_back(0, n);
    return runs;
  }
  int start = 0;
  while (seq[static_cast<std::size_t>(start)] != 0) ++start;  // first zero
  for (int k = 1; k <= n; ++k) {
    const int i = (start + k) % n;
    if (seq[static_cast<std::size_t>(i)] && !seq[static_cast<std::size_t>((i + n - 1) % n)]) {
      int len = 0;
      while (seq[static_cast<std::size_t>((i + len) % n)]) ++len;
      runs.emplace_back(i, len);
    }
  }
  std::sort(runs.begin(), runs.end());
  return runs;
}

/// α-runs of a one-dimensional field as cuboids.
inline std::vector<Cuboid> runs_as_valleys(const PotentialField& f) {
  std::vector<std::uint8_t> alpha(f.occupancy.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] = f.occupancy[i] ? 0 : 1;
  std::vector<Cuboid> out;
  if (std::none_of(alpha.begin(), alpha.end(), [](auto v) { return v != 0; })) return out;
  for (auto [s, len] : cyclic_runs(alpha)) out.push_back(Cuboid{{s, 0, 0}, {len, 1, 1}});
  return out;
}

}  // namespace detail

/// Build a field from an explicit occupancy vector (1 = β).
inline PotentialField make_field(const GridSpec& grid, const Amplitudes& amp, std::vector<std::uint8_t> occupancy,
                                 FieldKind kind = FieldKind::custom) {
  auto f = detail::blank_field(grid, amp, kind, true);
  require(occupancy.size() == grid.num_cells(), "potential: occupancy size does not match grid");
  for (auto& v : occupancy) v = v ? 1 : 0;
  f.occupancy = std::move(occupancy);
  if (grid.d == 1) f.valleys = detail::runs_as_valleys(f);
  return f;
}

/// Tensor-product field from explicit 1D factors (1 = α factor value):
/// a cell is α iff every factor is 1 at its coordinate.
inline PotentialField gen_tensor_from_factors(const GridSpec& grid, const Amplitudes& amp,
                                              const std::vector<std::vector<std::uint8_t>>& factors,
                                              FieldKind kind = FieldKind::tensor) {
  auto f = detail::blank_field(grid, amp, kind, true);
  require(static_cast<int>(factors.size()) == grid.d, "tensor: need one factor per axis");
  for (const auto& fac : factors)
    require(static_cast<int>(fac.size()) == grid.inv_eps, "tensor: factor length must equal inv_eps");
  const Lattice lat = cell_lattice(grid);
  for (std::size_t i = 0; i < f.occupancy.size(); ++i) {
    const Coord c = lat.coords(i);
    bool alpha = true;
    for (int a = 0; a < grid.d; ++a) alpha = alpha && factors[static_cast<std::size_t>(a)][static_cast<std::size_t>(c[a])] != 0;
    f.occupancy[i] = alpha ? 0 : 1;
  }
  // Valleys are products of the cyclic α-runs of each factor.
  std::vector<std::vector<std::pair<int, int>>> runs;
  for (const auto& fac : factors) {
    if (std::none_of(fac.begin(), fac.end(), [](auto v) { return v != 0; })) return f;
    runs.push_back(detail::cyclic_runs(fac));
  }
  std::vector<std::size_t> pick(static_cast<std::size_t>(grid.d), 0);
  while (true) {
    Cuboid box;
    for (int a = 0; a < grid.d; ++a) {
      const auto& r = runs[static_cast<std::size_t>(a)][pick[static_cast<std::size_t>(a)]];
      box.anchor[a] = r.first;
      box.extent[a] = r.second;
    }
    f.valleys.push_back(box);
    int a = 0;
    for (; a < grid.d; ++a) {
      if (++pick[static_cast<std::size_t>(a)] < runs[static_cast<std::size_t>(a)].size()) break;
      pick[static_cast<std::size_t>(a)] = 0;
    }
    if (a == grid.d) break;
  }
  return f;
}

/// Periodic checkerboard: a cell is α iff all its coordinates are odd, so
/// in 1D V = β on cells with even index and there are (2ε)^{-d} α-cells.
inline PotentialField gen_periodic(const GridSpec& grid, const Amplitudes& amp) {
  grid.validate();
  require(grid.inv_eps % 2 == 0, "gen_periodic: inv_eps must be even, otherwise the pattern breaks across the torus seam");
  std::vector<std::uint8_t> factor(static_cast<std::size_t>(grid.inv_eps));
  for (int i = 0; i < grid.inv_eps; ++i) factor[static_cast<std::size_t>(i)] = (i % 2 == 1) ? 1 : 0;
  std::vector<std::vector<std::uint8_t>> factors(static_cast<std::size_t>(grid.d), factor);
  return gen_tensor_from_factors(grid, amp, factors, FieldKind::periodic);
}

/// Independent cells: β with probability p_beta. Draw i belongs to cell i.
inline PotentialField gen_iid(const GridSpec& grid, const Amplitudes& amp, double p_beta) {
  require(p_beta >= 0.0 && p_beta <= 1.0, "gen_iid: p_beta must lie in [0,1]");
  auto f = detail::blank_field(grid, amp, FieldKind::iid, true);
  CounterRng rng(grid.seed, 0x11d);
  for (std::size_t i = 0; i < f.occupancy.size(); ++i) f.occupancy[i] = rng.bernoulli(p_beta) ? 1 : 0;
  if (grid.d == 1) f.valleys = detail::runs_as_valleys(f);
  return f;
}

/// Random tensor-product field: d independent Bernoulli(p_alpha_1d) factors.
inline PotentialField gen_tensor(const GridSpec& grid, const Amplitudes& amp, double p_alpha_1d) {
  grid.validate();
  require(p_alpha_1d >= 0.0 && p_alpha_1d <= 1.0, "gen_tensor: p_alpha_1d must lie in [0,1]");
  std::vector<std::vector<std::uint8_t>> factors;
  for (int a = 0; a < grid.d; ++a) {
    CounterRng rng(grid.seed, 0x7e50 + static_cast<std::uint64_t>(a));
    std::vector<std::uint8_t> fac(static_cast<std::size_t>(grid.inv_eps));
    for (auto& v : fac) v = rng.bernoulli(p_alpha_1d) ? 1 : 0;
    factors.push_back(std::move(fac));
  }
  return gen_tensor_from_factors(grid, amp, factors, FieldKind::tensor);
}

/// All-β field with the given α-cuboids carved out.
inline PotentialField plant_valleys(const GridSpec& grid, const Amplitudes& amp, const std::vector<Cuboid>& valleys) {
  auto f = detail::blank_field(grid, amp, FieldKind::planted, true);
  const Lattice lat = cell_lattice(grid);
  for (const auto& v : valleys) {
    for (int a = 0; a < grid.d; ++a)
      require(v.extent[a] >= 1 && v.extent[a] <= grid.inv_eps, "plant_valleys: valley extent out of range");
    for_each_cell(lat, v, [&](std::size_t i) { f.occupancy[i] = 0; });
  }
  f.valleys = valleys;
  return f;
}

// ---------------------------------------------------------------------------
// Domino potential

struct DominoParams {
  double level_decay = 0.5;  // P(level j) ∝ level_decay^j
  int max_level = 8;
  /// d = 1 only: levels used in order before sampling resumes.
  std::vector<int> forced_levels;
};

/// One j-block: extent 2j along `axis`, j along the others.
struct DominoBlock {
  Coord anchor{0, 0, 0};
  int axis = 0;
  int level = 1;
  bool alpha_first = true;

  Cuboid box(int d) const {
    Cuboid b{anchor, {1, 1, 1}};
    for (int a = 0; a < d; ++a) b.extent[a] = level;
    b.extent[axis] = 2 * level;
    return b;
  }
  Cuboid alpha_half(int d) const {
    Cuboid b{anchor, {1, 1, 1}};
    for (int a = 0; a < d; ++a) b.extent[a] = level;
    if (!alpha_first) b.anchor[axis] += level;
    return b;
  }
};

struct DominoTiling {
  std::vector<DominoBlock> blocks;
  int repairs = 0;  // large blocks removed to make the remainder tileable
};

namespace detail {

inline int sample_level(CounterRng& rng, double decay, int max_level) {
  // Truncated geometric: P(j) ∝ decay^j, j = 1..max_level (inverse CDF).
  std::vector<double> w(static_cast<std::size_t>(max_level));
  double acc = 0.0;
  for (int j = 1; j <= max_level; ++j) {
    acc += std::pow(decay, j);
    w[static_cast<std::size_t>(j - 1)] = acc;
  }
  const double u = rng.uniform() * acc;
  for (int j = 1; j <= max_level; ++j)
    if (u < w[static_cast<std::size_t>(j - 1)]) return j;
  return max_level;
}

/// Perfect matching of free cells into adjacent pairs (1-blocks) on the
/// torus grid graph. Greedy start, then BFS augmenting paths. Returns the
/// partner of every free cell, or -1 where no partner could be found.
inline std::vector<long> match_free_cells(const Lattice& lat, const std::vector<std::uint8_t>& covered,
                                          CounterRng& rng) {
  const std::size_t n = covered.size();
  std::vector<long> mate(n, -1);
  auto neighbours = [&](std::size_t idx, std::vector<std::size_t>& out) {
    out.clear();
    const Coord c = lat.coords(idx);
    for (int a = 0; a < lat.d; ++a) {
      for (int s : {-1, 1}) {
        Coord q = c;
        q[a] += s;
        const std::size_t j = lat.index(q);
        if (j != idx && !covered[j] && std::find(out.begin(), out.end(), j) == out.end()) out.push_back(j);
      }
    }
  };
  auto is_left = [&](std::size_t idx) {
    const Coord c = lat.coords(idx);
    int s = 0;
    for (int a = 0; a < lat.d; ++a) s += c[a];
    return s % 2 == 0;
  };
  std::vector<std::size_t> nb;
  // Greedy pass in a random order so orientations are mixed.
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i)
    if (!covered[i] && is_left(i)) order.push_back(i);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  for (std::size_t u : order) {
    neighbours(u, nb);
    for (std::size_t k = nb.size(); k > 1; --k) std::swap(nb[k - 1], nb[rng.below(k)]);
    for (std::size_t v : nb) {
      if (mate[v] < 0) {
        mate[u] = static_cast<long>(v);
        mate[v] = static_cast<long>(u);
        break;
      }
    }
  }
  // Augmenting paths from each unmatched left vertex.
  std::vector<long> parent(n);
  std::vector<std::uint8_t> seen(n);
  for (std::size_t root : order) {
    if (mate[root] >= 0) continue;
    std::fill(seen.begin(), seen.end(), std::uint8_t{0});
    std::deque<std::size_t> queue{root};
    seen[root] = 1;
    long found = -1;
    while (!queue.empty() && found < 0) {
      const std::size_t u = queue.front();
      queue.pop_front();
      neighbours(u, nb);
      for (std::size_t v : nb) {
        if (seen[v]) continue;
        seen[v] = 1;
        parent[v] = static_cast<long>(u);
        if (mate[v] < 0) {
          found = static_cast<long>(v);
          break;
        }
        const auto w = static_cast<std::size_t>(mate[v]);
        if (!seen[w]) {
          seen[w] = 1;
          queue.push_back(w);
        }
      }
    }
    if (found < 0) continue;
    auto v = static_cast<std::size_t>(found);
    while (true) {
      const auto u = static_cast<std::size_t>(parent[v]);
      const long prev = mate[u];
      mate[u] = static_cast<long>(v);
      mate[v] = static_cast<long>(u);
      if (u == root) break;
      v = static_cast<std::size_t>(prev);
    }
  }
  return mate;
}

}  // namespace detail

/// Tile the torus exactly by domino blocks.
///
/// d = 1: blocks are laid consecutively from cell 0 with sampled levels,
/// the last block shrunk to the remaining length (so block levels are
/// i.i.d. truncated-geometric apart from the final block).
/// d >= 2: large blocks (level >= 2) are placed greedily at uncovered
/// cells visited in a seeded random order, each shrunk until it fits; the
/// remainder is tiled by 1-blocks through a perfect matching of the grid
/// graph, and large blocks next to unmatched cells are removed until the
/// matching is perfect (always reached: the empty placement is tileable
/// for even inv_eps).
inline DominoTiling domino_tiling(const GridSpec& grid, const DominoParams& params) {
  grid.validate();
  require(grid.inv_eps % 2 == 0, "gen_domino: inv_eps must be even for an exact domino tiling");
  require(params.max_level >= 1, "gen_domino: max_level must be >= 1");
  require(params.level_decay > 0.0, "gen_domino: level_decay must be > 0");
  require(params.forced_levels.empty() || grid.d == 1, "gen_domino: forced levels are supported for d = 1 only");
  const Lattice lat = cell_lattice(grid);
  const int n = grid.inv_eps;
  const int cap = std::min(params.max_level, n / 2);
  DominoTiling tiling;
  CounterRng level_rng(grid.seed, 0xd0);
  CounterRng shape_rng(grid.seed, 0xd1);

  if (grid.d == 1) {
    int pos = 0;
    std::size_t forced = 0;
    while (pos < n) {
      int j = forced < params.forced_levels.size() ? params.forced_levels[forced++]
                                                   : detail::sample_level(level_rng, params.level_decay, cap);
      require(j >= 1, "gen_domino: forced levels must be >= 1");
      j = std::min(j, (n - pos) / 2);
      tiling.blocks.push_back(DominoBlock{{pos, 0, 0}, 0, j, shape_rng.bernoulli(0.5)});
      pos += 2 * j;
    }
    return tiling;
  }

  std::vector<std::uint8_t> covered(lat.size(), 0);
  std::vector<long> owner(lat.size(), -1);
  std::vector<DominoBlock> large;
  auto fits = [&](const Cuboid& box) {
    bool ok = true;
    for_each_cell(lat, box, [&](std::size_t i) { ok = ok && !covered[i]; });
    return ok;
  };
  std::vector<std::size_t> order(lat.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shape_rng.below(i)]);
  for (std::size_t cell : order) {
    if (covered[cell]) continue;
    const int j0 = detail::sample_level(level_rng, params.level_decay, cap);
    const int axis = static_cast<int>(shape_rng.below(static_cast<std::uint64_t>(grid.d)));
    const bool alpha_first = shape_rng.bernoulli(0.5);
    for (int j = j0; j >= 2; --j) {
      DominoBlock b{lat.coords(cell), axis, j, alpha_first};
      const Cuboid box = b.box(grid.d);
      if (!fits(box)) continue;
      const long id = static_cast<long>(large.size());
      for_each_cell(lat, box, [&](std::size_t i) {
        covered[i] = 1;
        owner[i] = id;
      });
      large.push_back(b);
      break;
    }
  }

  std::vector<std::uint8_t> removed(large.size(), 0);
  while (true) {
    CounterRng match_rng(grid.seed, 0xd2 + static_cast<std::uint64_t>(tiling.repairs));
    auto mate = detail::match_free_cells(lat, covered, match_rng);
    long hole = -1;
    for (std::size_t i = 0; i < mate.size(); ++i)
      if (!covered[i] && mate[i] < 0) {
        hole = static_cast<long>(i);
        break;
      }
    if (hole < 0) {
      for (std::size_t b = 0; b < large.size(); ++b)
        if (!removed[b]) tiling.blocks.push_back(large[b]);
      for (std::size_t i = 0; i < mate.size(); ++i) {
        if (covered[i] || mate[i] < static_cast<long>(i)) continue;
        const auto k = static_cast<std::size_t>(mate[i]);
        const Coord ci = lat.coords(i), ck = lat.coords(k);
        int axis = 0;
        for (int a = 0; a < grid.d; ++a)
          if (ci[a] != ck[a]) axis = a;
        // Anchor at the cell from which the partner is one step forward.
        Coord anchor = (lat.wrap(ci[axis] + 1) == ck[axis]) ? ci : ck;
        tiling.blocks.push_back(DominoBlock{anchor, axis, 1, shape_rng.bernoulli(0.5)});
      }
      return tiling;
    }
    // Remove the live large block closest to the hole.
    const Coord hc = lat.coords(static_cast<std::size_t>(hole));
    long best = -1;
    int best_dist = 1 << 30;
    for (std::size_t b = 0; b < large.size(); ++b) {
      if (removed[b]) continue;
      int dist = 1 << 30;
      for_each_cell(lat, large[b].box(grid.d), [&](std::size_t i) { dist = std::min(dist, lat.distance(hc, lat.coords(i))); });
      if (dist < best_dist) {
        best_dist = dist;
        best = static_cast<long>(b);
      }
    }
    if (best < 0) throw NumericalFailure("gen_domino: unmatched cells remain without large blocks (internal error)");
    removed[static_cast<std::size_t>(best)] = 1;
    for_each_cell(lat, large[static_cast<std::size_t>(best)].box(grid.d), [&](std::size_t i) {
      covered[i] = 0;
      owner[i] = -1;
    });
    ++tiling.repairs;
  }
}

inline PotentialField field_from_tiling(const GridSpec& grid, const Amplitudes& amp, const DominoTiling& tiling) {
  auto f = detail::blank_field(grid, amp, FieldKind::domino, true);
  const Lattice lat = cell_lattice(grid);
  for (const auto& b : tiling.blocks) {
    const Cuboid half = b.alpha_half(grid.d);
    for_each_cell(lat, half, [&](std::size_t i) { f.occupancy[i] = 0; });
    f.valleys.push_back(half);
  }
  return f;
}

inline PotentialField gen_domino(const GridSpec& grid, const Amplitudes& amp, const DominoParams& params) {
  return field_from_tiling(grid, amp, domino_tiling(grid, params));
}

}  // namespace anderson
