#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "anderson/error.hpp"
#include "anderson/grid.hpp"
#include "anderson/potential.hpp"

namespace anderson {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;

/// Uniform subgrid with m elements per ε-cell and axis (h = ε/m).
struct SubgridSpec {
  GridSpec grid;
  int m = 1;

  int nodes_per_axis() const { return grid.inv_eps * m; }
  double h() const { return grid.eps() / m; }
  Lattice node_lattice() const { return Lattice{grid.d, nodes_per_axis()}; }
  std::size_t num_dofs() const { return node_lattice().size(); }

  void validate() const {
    grid.validate();
    require(m >= 1, "subgrid: m must be >= 1");
  }
  bool operator==(const SubgridSpec&) const = default;
};

inline constexpr std::size_t kDefaultDofLimit = std::size_t{1} << 22;

/// Q1 reference matrices on one element of side h, local node s has
/// offset bit (s >> a) & 1 along axis a.
struct ElementMatrices {
  int d = 1;
  Mat stiffness;
  Mat mass;

  static ElementMatrices make(int d, double h) {
    const double k1[2][2] = {{1.0 / h, -1.0 / h}, {-1.0 / h, 1.0 / h}};
    const double m1[2][2] = {{h / 3.0, h / 6.0}, {h / 6.0, h / 3.0}};
    const int n = 1 << d;
    ElementMatrices e{d, Mat::Zero(n, n), Mat::Zero(n, n)};
    for (int s = 0; s < n; ++s) {
      for (int t = 0; t < n; ++t) {
        double mass = 1.0;
        for (int a = 0; a < d; ++a) mass *= m1[(s >> a) & 1][(t >> a) & 1];
        double stiff = 0.0;
        for (int a = 0; a < d; ++a) {
          double term = k1[(s >> a) & 1][(t >> a) & 1];
          for (int b = 0; b < d; ++b)
            if (b != a) term *= m1[(s >> b) & 1][(t >> b) & 1];
          stiff += term;
        }
        e.mass(s, t) = mass;
        e.stiffness(s, t) = stiff;
      }
    }
    return e;
  }
};

/// Global dofs of the element whose lowest node is `corner`.
inline std::array<std::size_t, 8> element_dofs(const Lattice& nodes, const Coord& corner) {
  std::array<std::size_t, 8> out{};
  for (int s = 0; s < (1 << nodes.d); ++s) {
    Coord c = corner;
    for (int a = 0; a < nodes.d; ++a) c[a] += (s >> a) & 1;
    out[static_cast<std::size_t>(s)] = nodes.index(c);
  }
  return out;
}

/// ε-cell containing the element with lowest node `corner`.
inline std::size_t element_cell(const SubgridSpec& sub, const Coord& corner) {
  Coord c{0, 0, 0};
  for (int a = 0; a < sub.grid.d; ++a) c[a] = corner[a] / sub.m;
  return cell_lattice(sub.grid).index(c);
}

struct AssembledSystem {
  SubgridSpec sub;
  std::vector<double> cell_potential;  // V per ε-cell
  ElementMatrices element;
  SpMat K;   // ∫ ∇u·∇v
  SpMat MV;  // ∫ V u v
  SpMat M;   // ∫ u v
  SpMat A;   // K + MV

  std::size_t size() const { return static_cast<std::size_t>(A.rows()); }
};

inline AssembledSystem assemble(const PotentialField& field, const SubgridSpec& sub,
                                std::size_t dof_limit = kDefaultDofLimit) {
  sub.validate();
  require(sub.grid.d == field.grid.d && sub.grid.inv_eps == field.grid.inv_eps,
          "assemble: subgrid and field grids differ");
  require(sub.num_dofs() <= dof_limit, "assemble: " + std::to_string(sub.num_dofs()) +
                                           " dofs exceed the configured limit " + std::to_string(dof_limit));
  AssembledSystem sys;
  sys.sub = sub;
  sys.element = ElementMatrices::make(sub.grid.d, sub.h());
  sys.cell_potential.resize(field.num_cells());
  for (std::size_t c = 0; c < field.num_cells(); ++c) sys.cell_potential[c] = field.value(c);

  const Lattice nodes = sub.node_lattice();
  const std::size_t n = nodes.size();
  const int local = 1 << sub.grid.d;
  std::vector<Eigen::Triplet<double>> tk, tv, tm;
  const std::size_t nnz = n * static_cast<std::size_t>(local * local);
  tk.reserve(nnz);
  tv.reserve(nnz);
  tm.reserve(nnz);
  for (std::size_t e = 0; e < n; ++e) {
    const Coord corner = nodes.coords(e);
    const auto dofs = element_dofs(nodes, corner);
    const double v = sys.cell_potential[element_cell(sub, corner)];
    for (int s = 0; s < local; ++s) {
      for (int t = 0; t < local; ++t) {
        const auto i = static_cast<Eigen::Index>(dofs[static_cast<std::size_t>(s)]);
        const auto j = static_cast<Eigen::Index>(dofs[static_cast<std::size_t>(t)]);
        tk.emplace_back(i, j, sys.element.stiffness(s, t));
        tm.emplace_back(i, j, sys.element.mass(s, t));
        tv.emplace_back(i, j, v * sys.element.mass(s, t));
      }
    }
  }
  const auto dim = static_cast<Eigen::Index>(n);
  sys.K.resize(dim, dim);
  sys.M.resize(dim, dim);
  sys.MV.resize(dim, dim);
  sys.K.setFromTriplets(tk.begin(), tk.end());
  sys.M.setFromTriplets(tm.begin(), tm.end());
  sys.MV.setFromTriplets(tv.begin(), tv.end());
  sys.A = sys.K + sys.MV;
  return sys;
}

inline void check_dim(const AssembledSystem& sys, const Vec& v, const char* who) {
  require(static_cast<std::size_t>(v.size()) == sys.size(),
          std::string(who) + ": vector has " + std::to_string(v.size()) + " entries, system has " +
              std::to_string(sys.size()));
}

struct EnergyParts {
  double gradient = 0.0;   // vᵀKv
  double potential = 0.0;  // vᵀ MV v
  double total() const { return gradient + potential; }
};

inline EnergyParts energy_parts(const AssembledSystem& sys, const Vec& v) {
  check_dim(sys, v, "energy_parts");
  return {v.dot(sys.K * v), v.dot(sys.MV * v)};
}

inline double a_inner(const AssembledSystem& sys, const Vec& u, const Vec& v) {
  check_dim(sys, u, "a_inner");
  check_dim(sys, v, "a_inner");
  return u.dot(sys.A * v);
}

inline double energy_norm(const AssembledSystem& sys, const Vec& v) {
  check_dim(sys, v, "energy_norm");
  return std::sqrt(std::max(0.0, v.dot(sys.A * v)));
}

inline double l2_norm(const AssembledSystem& sys, const Vec& v) {
  check_dim(sys, v, "l2_norm");
  return std::sqrt(std::max(0.0, v.dot(sys.M * v)));
}

inline double rayleigh(const AssembledSystem& sys, const Vec& v) {
  check_dim(sys, v, "rayleigh");
  const double mass = v.dot(sys.M * v);
  require(mass > 0.0, "rayleigh: zero vector");
  return v.dot(sys.A * v) / mass;
}

/// Energy vᵀA_T v of v restricted to each ε-cell T (sums to vᵀAv).
inline std::vector<double> cell_energies(const AssembledSystem& sys, const Vec& v) {
  check_dim(sys, v, "cell_energies");
  const Lattice nodes = sys.sub.node_lattice();
  const int local = 1 << sys.sub.grid.d;
  std::vector<double> out(sys.cell_potential.size(), 0.0);
  Vec ve(local);
  for (std::size_t e = 0; e < nodes.size(); ++e) {
    const Coord corner = nodes.coords(e);
    const auto dofs = element_dofs(nodes, corner);
    for (int s = 0; s < local; ++s) ve[s] = v[static_cast<Eigen::Index>(dofs[static_cast<std::size_t>(s)])];
    const std::size_t cell = element_cell(sys.sub, corner);
    const double pot = sys.cell_potential[cell];
    out[cell] += ve.dot(sys.element.stiffness * ve) + pot * ve.dot(sys.element.mass * ve);
  }
  return out;
}

/// L² mass of v on each ε-cell.
inline std::vector<double> cell_masses(const AssembledSystem& sys, const Vec& v) {
  check_dim(sys, v, "cell_masses");
  const Lattice nodes = sys.sub.node_lattice();
  const int local = 1 << sys.sub.grid.d;
  std::vector<double> out(sys.cell_potential.size(), 0.0);
  Vec ve(local);
  for (std::size_t e = 0; e < nodes.size(); ++e) {
    const Coord corner = nodes.coords(e);
    const auto dofs = element_dofs(nodes, corner);
    for (int s = 0; s < local; ++s) ve[s] = v[static_cast<Eigen::Index>(dofs[static_cast<std::size_t>(s)])];
    out[element_cell(sys.sub, corner)] += ve.dot(sys.element.mass * ve);
  }
  return out;
}

/// ε-cells on which the finite element function v does not vanish: the
/// cells of all elements touching a nonzero node.
inline CellMask support_cells(const SubgridSpec& sub, const Vec& v) {
  const Lattice nodes = sub.node_lattice();
  const Lattice cells = cell_lattice(sub.grid);
  CellMask mask(sub.grid);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (v[static_cast<Eigen::Index>(i)] == 0.0) continue;
    const Coord x = nodes.coords(i);
    for (int s = 0; s < (1 << sub.grid.d); ++s) {
      Coord c{0, 0, 0};
      for (int a = 0; a < sub.grid.d; ++a) c[a] = nodes.wrap(x[a] - ((s >> a) & 1)) / sub.m;
      mask.set(cells.index(c));
    }
  }
  return mask;
}

/// Nodes lying in the closure of the masked cells.
inline std::vector<std::uint8_t> nodes_in_cells(const SubgridSpec& sub, const CellMask& mask) {
  const Lattice nodes = sub.node_lattice();
  const Lattice cells = cell_lattice(sub.grid);
  std::vector<std::uint8_t> out(nodes.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Coord x = nodes.coords(i);
    for (int s = 0; s < (1 << sub.grid.d) && !out[i]; ++s) {
      Coord c{0, 0, 0};
      for (int a = 0; a < sub.grid.d; ++a) c[a] = nodes.wrap(x[a] - ((s >> a) & 1)) / sub.m;
      out[i] = mask[cells.index(c)] ? 1 : 0;
    }
  }
  return out;
}

/// Load F(w) = ∫_T w of the indicator of one ε-cell T.
inline Vec cell_indicator_load(const AssembledSystem& sys, std::size_t cell) {
  const Lattice nodes = sys.sub.node_lattice();
  const int local = 1 << sys.sub.grid.d;
  Vec F = Vec::Zero(static_cast<Eigen::Index>(sys.size()));
  for (std::size_t e = 0; e < nodes.size(); ++e) {
    const Coord corner = nodes.coords(e);
    if (element_cell(sys.sub, corner) != cell) continue;
    const auto dofs = element_dofs(nodes, corner);
    for (int s = 0; s < local; ++s)
      F[static_cast<Eigen::Index>(dofs[static_cast<std::size_t>(s)])] += sys.element.mass.row(s).sum();
  }
  return F;
}

/// Sparse direct solver for A (or any SPD matrix) via LDLᵀ.
class DirectSolver {
 public:
  explicit DirectSolver(const SpMat& matrix) : ldlt_(matrix) {
    if (ldlt_.info() != Eigen::Success) throw NumericalFailure("direct solve: LDLT factorization failed");
  }
  Vec solve(const Vec& rhs) const {
    Vec x = ldlt_.solve(rhs);
    if (ldlt_.info() != Eigen::Success) throw NumericalFailure("direct solve: back substitution failed");
    return x;
  }

 private:
  Eigen::SimplicialLDLT<SpMat> ldlt_;
};

// ---------------------------------------------------------------------------
// Cut-off function

struct CutoffField {
  std::vector<double> eta;    // nodal values in [0, 1]
  double gradient_bound = 0;  // 4√d/ε
  double max_gradient = 0;    // measured max |∇η| over elements
};

/// Nodal η: 1 outside β-cells, 0 on the centred closed cube of side ε/2
/// in each β-cell, linear in the sup-distance to that cube across the
/// ε/4 collar (min over the β-cells containing the node).
inline CutoffField build_cutoff(const PotentialField& field, const SubgridSpec& sub) {
  sub.validate();
  require(sub.m >= 4 && sub.m % 4 == 0, "build_cutoff: m must be a positive multiple of 4");
  const Lattice nodes = sub.node_lattice();
  const Lattice cells = cell_lattice(sub.grid);
  const int d = sub.grid.d;
  const int q = sub.m / 4;
  CutoffField out;
  out.eta.assign(nodes.size(), 1.0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Coord x = nodes.coords(i);
    // Each axis contributes one cell, or two when the node sits on a cell face.
    for (int s = 0; s < (1 << d); ++s) {
      Coord c{0, 0, 0};
      Coord local{0, 0, 0};
      bool valid = true;
      for (int a = 0; a < d; ++a) {
        const int shift = (s >> a) & 1;
        if (shift && x[a] % sub.m != 0) {
          valid = false;
          break;
        }
        const int base = nodes.wrap(x[a] - shift);
        c[a] = base / sub.m;
        local[a] = shift ? sub.m : x[a] % sub.m;
      }
      if (!valid || !field.is_beta(cells.index(c))) continue;
      int dist = 0;
      for (int a = 0; a < d; ++a) dist = std::max({dist, q - local[a], local[a] - 3 * q});
      out.eta[i] = std::min(out.eta[i], std::clamp(static_cast<double>(dist) / q, 0.0, 1.0));
    }
  }
  out.gradient_bound = 4.0 * std::sqrt(static_cast<double>(d)) / sub.grid.eps();
  // The Q1 gradient is extremal at element corners.
  const double h = sub.h();
  for (std::size_t e = 0; e < nodes.size(); ++e) {
    const auto dofs = element_dofs(nodes, nodes.coords(e));
    for (int s = 0; s < (1 << d); ++s) {
      double g2 = 0.0;
      for (int a = 0; a < d; ++a) {
        const int t = s ^ (1 << a);
        const double diff = out.eta[dofs[static_cast<std::size_t>(s)]] - out.eta[dofs[static_cast<std::size_t>(t)]];
        g2 += diff * diff / (h * h);
      }
      out.max_gradient = std::max(out.max_gradient, std::sqrt(g2));
    }
  }
  return out;
}

inline Vec apply_cutoff(const CutoffField& cutoff, const Vec& v) {
  require(static_cast<std::size_t>(v.size()) == cutoff.eta.size(), "apply_cutoff: dimension mismatch");
  Vec out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = cutoff.eta[static_cast<std::size_t>(i)] * v[i];
  return out;
}

}  // namespace anderson
