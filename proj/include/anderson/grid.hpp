#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "anderson/error.hpp"

namespace anderson {

/// Integer coordinates; unused trailing axes are zero.
using Coord = std::array<int, 3>;

/// The ε-partition of the unit torus: d axes with `inv_eps` cells each.
struct GridSpec {
  int d = 1;
  int inv_eps = 2;
  std::uint64_t seed = 0;

  double eps() const { return 1.0 / inv_eps; }

  std::size_t num_cells() const {
    std::size_t n = 1;
    for (int i = 0; i < d; ++i) n *= static_cast<std::size_t>(inv_eps);
    return n;
  }

  void validate() const {
    require(d >= 1 && d <= 3, "grid: dimension d must be 1, 2 or 3 (got " + std::to_string(d) + ")");
    require(inv_eps >= 2, "grid: inv_eps must be >= 2 (got " + std::to_string(inv_eps) + ")");
  }

  bool operator==(const GridSpec&) const = default;
};

/// Periodic lattice helper: `side` points per axis in `d` axes, axis 0
/// fastest in the linear index. Used for both ε-cells and subgrid nodes.
struct Lattice {
  int d = 1;
  int side = 1;

  std::size_t size() const {
    std::size_t n = 1;
    for (int i = 0; i < d; ++i) n *= static_cast<std::size_t>(side);
    return n;
  }

  int wrap(int x) const {
    x %= side;
    return x < 0 ? x + side : x;
  }

  std::size_t index(const Coord& c) const {
    std::size_t idx = 0;
    for (int i = d - 1; i >= 0; --i) idx = idx * static_cast<std::size_t>(side) + static_cast<std::size_t>(wrap(c[i]));
    return idx;
  }

  Coord coords(std::size_t idx) const {
    Coord c{0, 0, 0};
    for (int i = 0; i < d; ++i) {
      c[i] = static_cast<int>(idx % static_cast<std::size_t>(side));
      idx /= static_cast<std::size_t>(side);
    }
    return c;
  }

  /// Sup-norm distance on the torus.
  int distance(const Coord& a, const Coord& b) const {
    int dist = 0;
    for (int i = 0; i < d; ++i) {
      int t = wrap(a[i] - b[i]);
      dist = std::max(dist, std::min(t, side - t));
    }
    return dist;
  }

  bool operator==(const Lattice&) const = default;
};

inline Lattice cell_lattice(const GridSpec& g) { return Lattice{g.d, g.inv_eps}; }

/// Boolean mask over ε-cells, e.g. the cells where an iterate may be
/// nonzero. Dilation is in the torus sup-norm, one ε-layer per unit.
class CellMask {
 public:
  CellMask() = default;
  explicit CellMask(const GridSpec& g, bool value = false)
      : lat_(cell_lattice(g)), bits_(g.num_cells(), value ? 1 : 0) {}

  const Lattice& lattice() const { return lat_; }
  std::size_t size() const { return bits_.size(); }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool v = true) { bits_[i] = v ? 1 : 0; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  bool empty() const { return count() == 0; }

  bool subset_of(const CellMask& other) const {
    for (std::size_t i = 0; i < bits_.size(); ++i)
      if (bits_[i] && !other.bits_[i]) return false;
    return true;
  }

  CellMask& operator|=(const CellMask& other) {
    for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] |= other.bits_[i];
    return *this;
  }

  /// Dilate by `layers` cells in the sup-norm (separable, axis by axis).
  CellMask dilated(int layers) const {
    CellMask out = *this;
    if (layers <= 0) return out;
    const int n = lat_.side;
    const int r = std::min(layers, n);
    std::vector<std::uint8_t> tmp(bits_.size());
    for (int axis = 0; axis < lat_.d; ++axis) {
      std::fill(tmp.begin(), tmp.end(), std::uint8_t{0});
      for (std::size_t idx = 0; idx < out.bits_.size(); ++idx) {
        if (!out.bits_[idx]) continue;
        Coord c = lat_.coords(idx);
        const int base = c[axis];
        for (int o = -r; o <= r; ++o) {
          c[axis] = base + o;
          tmp[lat_.index(c)] = 1;
        }
      }
      out.bits_.swap(tmp);
    }
    return out;
  }

  const std::vector<std::uint8_t>& bits() const { return bits_; }
  bool operator==(const CellMask&) const = default;

 private:
  Lattice lat_{};
  std::vector<std::uint8_t> bits_;
};

}  // namespace anderson
