#pragma once

#include "poisloc/operator_core.hpp"

#include <stdexcept>
#include <utility>
#include <vector>

namespace poisloc {

using CVec = Eigen::VectorXcd;

struct Window {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
};

struct SpectralWindowResult {
  Window window;
  Vec eigenvalues;               // ascending
  Eigen::MatrixXd eigenvectors;  // columns, Euclidean-orthonormal
  Vec residuals;                 // ||H v - lambda v||
  Index expected_count = 0;      // from inertia
  Index found_count = 0;

  bool complete() const { return expected_count == found_count; }
};

struct EigenOptions {
  Index dense_cap = kDenseCap;
  int max_restarts = 12;
  double residual_tol = 1e-8;  // relative to the Gershgorin norm bound
  std::uint64_t seed = 0x5eed;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, SpectralWindowResult partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const SpectralWindowResult& partial() const { return partial_; }

 private:
  SpectralWindowResult partial_;
};

class ResonanceError : public std::runtime_error {
 public:
  ResonanceError(const std::string& what, double distance)
      : std::runtime_error(what), distance_(distance) {}
  double distance() const { return distance_; }

 private:
  double distance_;
};

/// Number of eigenvalues strictly below E, from the signature of an LDL^T
/// factorization of H - E.
Index count_below(const DiscreteHamiltonian& H, double energy);

/// All eigenpairs with eigenvalue in the window. Dense below the cap,
/// shift-invert Lanczos with locking above it. The result is certified by
/// inertia counts at both window edges.
SpectralWindowResult eigen_window(const DiscreteHamiltonian& H, Window window, EigenOptions options = {});

/// The k eigenvalues nearest to sigma (with vectors), shift-invert Lanczos.
SpectralWindowResult nearest_eigenpairs(const DiscreteHamiltonian& H, double sigma, Index k,
                                        EigenOptions options = {});

/// dist(E, spectrum(H)).
double spectral_distance(const DiscreteHamiltonian& H, double energy, EigenOptions options = {});

struct PairNorm {
  Vec x;
  Vec y;
  double distance = 0.0;
  double norm = 0.0;
};

struct ResolventProbe {
  double energy = 0.0;
  double spectral_distance = 0.0;
  double norm = 0.0;  // ||R(E)|| = 1 / dist(E, spectrum)
  std::vector<PairNorm> pairs;
};

inline constexpr double kResonanceTol = 1e-12;

/// ||R(E)|| and ||chi_x R(E) chi_y|| for unit cubes at the given centers.
/// Throws ResonanceError when E lies within kResonanceTol of the spectrum.
ResolventProbe resolvent_probe(const DiscreteHamiltonian& H, double energy,
                               const std::vector<std::pair<Vec, Vec>>& probe_pairs,
                               EigenOptions options = {});

struct EvolveOptions {
  Index dense_cap = kDenseCap;
  double tolerance = 1e-8;
  int max_degree = 400;
  /// Largest Chebyshev argument per step, a * dt.
  double max_step_argument = 100.0;
};

/// psi(t) = exp(-i t H) psi0 for each requested time.
std::vector<CVec> evolve(const DiscreteHamiltonian& H, const CVec& psi0, const std::vector<double>& times,
                         EvolveOptions options = {});
/// Chebyshev expansion path regardless of size.
std::vector<CVec> evolve_chebyshev(const DiscreteHamiltonian& H, const CVec& psi0,
                                   const std::vector<double>& times, EvolveOptions options = {});

}  // namespace poisloc
