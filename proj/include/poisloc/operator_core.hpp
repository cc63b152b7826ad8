#pragma once

#include "poisloc/potential_field.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <complex>
#include <iosfwd>
#include <optional>

namespace poisloc {

inline constexpr Index kDenseCap = 4096;
inline constexpr Index kGridCap = 4'000'000;

/// Interior nodes of a uniform Dirichlet grid on a box: x_i = lower + (i + 1) h,
/// i = 0..n-1 per axis, with h (n + 1) = L. Node indices are lexicographic
/// with axis 0 slowest.
struct Grid {
  Box box;
  double spacing = 1.0;
  Index nodes_per_axis = 0;

  Index size() const;
  Vec node(Index index) const;
  std::vector<Index> multi_index(Index index) const;
  Index index_of(const std::vector<Index>& multi) const;
  /// Nodes inside the half-open cube of the given side centered at c.
  std::vector<Index> nodes_in_cube(const Eigen::Ref<const Vec>& c, double side = 1.0) const;
  /// h^d, the weight of one node in discrete L^2 sums.
  double cell_volume() const;
};

Grid build_grid(const Box& box, double h, Index cap = kGridCap);

/// Samples a callable field at every grid node.
template <class Field>
Vec sample_field(const Grid& grid, const Field& field) {
  Vec v(grid.size());
  for (Index i = 0; i < grid.size(); ++i) v(i) = field(grid.node(i));
  return v;
}

/// -Delta_h + V on a Dirichlet grid. Immutable after construction.
class DiscreteHamiltonian {
 public:
  DiscreteHamiltonian(Grid grid, Vec potential);

  const Grid& grid() const { return grid_; }
  const Vec& potential() const { return potential_; }
  const Eigen::SparseMatrix<double>& sparse() const { return matrix_; }
  Index size() const { return potential_.size(); }

  /// Dense copy; throws std::length_error above `cap` unknowns.
  Eigen::MatrixXd dense(Index cap = kDenseCap) const;

  /// Matrix-free stencil application.
  template <class Derived>
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> apply(const Eigen::MatrixBase<Derived>& x) const;

  /// Gershgorin enclosure of the spectrum.
  double lower_bound() const;
  double upper_bound() const;
  /// max |lambda| upper bound.
  double norm_bound() const { return std::max(std::abs(lower_bound()), std::abs(upper_bound())); }

 private:
  Grid grid_;
  Vec potential_;
  Eigen::SparseMatrix<double> matrix_;
};

DiscreteHamiltonian assemble(const Grid& grid, const Eigen::Ref<const Vec>& potential);

template <class Field>
DiscreteHamiltonian assemble_field(const Grid& grid, const Field& field) {
  return assemble(grid, sample_field(grid, field));
}

/// Writes "row col value" triplets, one per line, 0-based.
void write_triplets(std::ostream& out, const Eigen::SparseMatrix<double>& m);

/// Forward-difference gradient norm with zero padding outside the grid,
/// measured in discrete L^2: sum over edges of ((g_j - g_i) / h)^2 h^d.
/// Equals <-Delta_h g, g>_h.
template <class Derived>
double gradient_norm(const Eigen::MatrixBase<Derived>& g, const Grid& grid);

/// (H2 + 1)^{-1/2} M (H2 + 1)^{-1/2} with H2 = -Delta_h + V2 and
/// M = diag(1 + E - V1).
struct GammaOperator {
  Grid grid;
  double energy = 0.0;
  Vec v1;
  Vec v2;
  Vec multiplier;
  Eigen::MatrixXd inv_sqrt;  // S = (H2 + 1)^{-1/2}
  Eigen::MatrixXd gamma;
  Vec eigenvalues;           // ascending
  Eigen::MatrixXd eigenvectors;

  double norm() const;
  /// Eigenvector of the eigenvalue of largest magnitude.
  Vec top_vector() const;
  /// Separation between the top magnitude and the next one.
  double top_gap() const;
};

GammaOperator build_gamma(const Grid& grid, const SplitSelection& sel, double energy, Index cap = kDenseCap);
GammaOperator build_gamma(const Grid& grid, const Eigen::Ref<const Vec>& v1, const Eigen::Ref<const Vec>& v2,
                          double energy, Index cap = kDenseCap);

struct GammaReport {
  double gamma_norm = 0.0;
  double e0 = 0.0;
  bool hypothesis = false;  // ||Gamma|| > 1 - E0
  bool degenerate_top = false;
  std::optional<Vec> g;
  double g_norm = 0.0;
  double grad_norm = 0.0;
  bool norm_window_ok = false;   // 1 - sqrt(E0) <= ||g|| <= 1
  bool gradient_ok = false;      // ||grad g|| <= 2 E0^{1/4}
  Points shifts;                 // probe translations a
  Vec pairings;                  // <tau_a V1 g, g>
  double pairing_constant = 0.0; // max pairing / (E0^{1/4} (|a| + 1))
  bool pairing_nonnegative = false;
  double pairing_slope = 0.0;    // least squares slope of pairing vs |a|
  /// c (1 - sqrt E0)^2 and c' E0^{1/4} K^{d+1}; contradiction when lhs > rhs.
  double average_constant = 0.0;
  double averaging_radius = 0.0;
  double contradiction_lhs = 0.0;
  double contradiction_rhs = 0.0;
  bool contradiction = false;
};

struct GammaDiagnosticsOptions {
  /// Lattice spacing of the translation probe set; 0 selects the cell side.
  double shift_step = 0.0;
  /// c of the translation-averaged field (measured by translation_average).
  double average_constant = 0.0;
  /// K; 0 selects 10 ell.
  double averaging_radius = 0.0;
};

GammaReport gamma_diagnostics(const GammaOperator& gamma, const SplitSelection& sel, double e0,
                              GammaDiagnosticsOptions options = {});

// ---------------------------------------------------------------------------

template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> DiscreteHamiltonian::apply(
    const Eigen::MatrixBase<Derived>& x) const {
  using Scalar = typename Derived::Scalar;
  const Index n = grid_.nodes_per_axis;
  const int d = grid_.box.dim;
  const double inv_h2 = 1.0 / (grid_.spacing * grid_.spacing);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y(size());
  Index stride[3] = {1, 1, 1};
  for (int a = d - 2; a >= 0; --a) stride[a] = stride[a + 1] * n;
  for (Index i = 0; i < size(); ++i) {
    Scalar acc = (2.0 * d * inv_h2 + potential_(i)) * x(i);
    Index rem = i;
    for (int a = 0; a < d; ++a) {
      const Index coord = (rem / stride[a]) % n;
      if (coord > 0) acc -= inv_h2 * x(i - stride[a]);
      if (coord + 1 < n) acc -= inv_h2 * x(i + stride[a]);
    }
    y(i) = acc;
  }
  return y;
}

template <class Derived>
double gradient_norm(const Eigen::MatrixBase<Derived>& g, const Grid& grid) {
  const Index n = grid.nodes_per_axis;
  const int d = grid.box.dim;
  Index stride[3] = {1, 1, 1};
  for (int a = d - 2; a >= 0; --a) stride[a] = stride[a + 1] * n;
  double sum = 0.0;
  for (Index i = 0; i < grid.size(); ++i) {
    for (int a = 0; a < d; ++a) {
      const Index coord = (i / stride[a]) % n;
      const auto forward = coord + 1 < n ? g(i + stride[a]) - g(i) : -g(i);
      sum += std::norm(forward);
      if (coord == 0) sum += std::norm(g(i));  // edge from the boundary into the first node
    }
  }
  return std::sqrt(sum * grid.cell_volume()) / grid.spacing;
}

}  // namespace poisloc
