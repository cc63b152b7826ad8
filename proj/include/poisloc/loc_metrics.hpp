#pragma once

#include "poisloc/spectral_engine.hpp"
#include "poisloc/stats.hpp"

#include <map>
#include <span>

namespace poisloc {

/// Centers of the unit cubes tiling the box, anchored at its lower corner
/// (ceil(L) cubes per axis, so every grid node falls in exactly one cube).
Points unit_lattice(const Box& box);

/// ||chi_x phi|| in discrete L^2 for every cube center x (columns of
/// `centers`).
template <class Derived>
Vec local_norms(const Eigen::MatrixBase<Derived>& phi, const Grid& grid, const Points& centers) {
  if (phi.size() != grid.size()) throw std::invalid_argument("local_norms: vector/grid size mismatch");
  Vec out(centers.cols());
  const double vol = grid.cell_volume();
  for (Index c = 0; c < centers.cols(); ++c) {
    double s = 0.0;
    for (Index i : grid.nodes_in_cube(centers.col(c))) s += std::norm(phi(i));
    out(c) = std::sqrt(s * vol);
  }
  return out;
}

/// sum |phi|^4 h^d / (sum |phi|^2 h^d)^2.
template <class Derived>
double ipr(const Eigen::MatrixBase<Derived>& phi, const Grid& grid) {
  const double vol = grid.cell_volume();
  const double two = phi.cwiseAbs2().sum() * vol;
  if (two == 0.0) throw std::invalid_argument("ipr: zero vector");
  const double four = phi.cwiseAbs2().cwiseAbs2().sum() * vol;
  return four / (two * two);
}

struct FitWindow {
  /// Distances kept are in [inner_fraction L, outer_fraction L - outer_margin]...
  double inner_fraction = 0.25;
  double outer_fraction = 0.5;
  double outer_margin = 1.0;
  /// ...and cubes within boundary_shell of the box boundary are dropped.
  double boundary_shell = 1.0;
  double floor = 1e-14;
  Index min_shells = 5;
};

struct DecayFit {
  double rate = 0.0;       // m
  double prefactor = 0.0;  // C_phi
  double r2 = 0.0;
  double window_lo = 0.0;
  double window_hi = 0.0;
  Index points = 0;
  Index shells = 0;
  std::vector<double> distances;
  std::vector<double> log_norms;
};

class InsufficientDecayRange : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Least squares fit of log ||chi_x phi|| against |x - center| over the
/// fit window: rate = -slope, prefactor = exp(intercept).
DecayFit decay_fit(const Eigen::Ref<const Vec>& phi, const Grid& grid, const Eigen::Ref<const Vec>& center,
                   FitWindow window = {});

/// Center of the unit cube carrying the largest local norm.
Vec localization_center(const Eigen::Ref<const Vec>& phi, const Grid& grid);

struct SudecParams {
  double nu = 1.0;
  double tau = 1.1;
  double s = 0.9;
  void validate(int dim) const;
};

struct SudecFit {
  /// max over pairs and (x, y) of the correlator ratio: the smallest C for
  /// which the bound holds on the sample.
  double constant = 0.0;
  double log_constant = -std::numeric_limits<double>::infinity();
  Index pair_index = 0;
  Vec worst_x;
  Vec worst_y;
};

/// ||T^{-1} psi|| with T(x) = <x - box center>^nu.
double weighted_norm(const Eigen::Ref<const Vec>& psi, const Grid& grid, double nu);

/// Ratio ||chi_x psi|| ||chi_y phi|| / (||T^-1 psi|| ||T^-1 phi|| e^{<y>^tau} e^{-|x-y|^s})
/// maximised over unit-lattice (x, y) and over the pairs.
SudecFit sudec_fit(const std::vector<std::pair<Vec, Vec>>& pairs, const SudecParams& params, const Grid& grid);

struct DynamicalMoment {
  std::vector<double> times;
  std::vector<double> trajectory;
  double sup = 0.0;
  bool empty_window = false;
  Index window_count = 0;
};

/// sup_t ||<x>^p exp(-itH) P chi_0||_HS^2 over the given times, where P is
/// the spectral projector of `window` and chi_0 the unit cube at the box
/// center. The Hilbert-Schmidt norm of the nodal block equals its Frobenius norm.
DynamicalMoment dynamical_moment(const SpectralWindowResult& window, const Grid& grid, double p,
                                 const std::vector<double>& times);
DynamicalMoment dynamical_moment(const DiscreteHamiltonian& H, double e0, double p, const std::vector<double>& times,
                                 EigenOptions options = {});
/// Same with an arbitrary positive weight w(x) in place of <x>^p.
DynamicalMoment dynamical_moment_weighted(const SpectralWindowResult& window, const Grid& grid,
                                          const Eigen::Ref<const Vec>& weight, const std::vector<double>& times);

/// multiplicity -> number of clusters, clustering eigenvalues whose gaps
/// are <= tol.
std::map<Index, Index> multiplicity_histogram(std::span<const double> sorted_eigenvalues, double tol);

}  // namespace poisloc
