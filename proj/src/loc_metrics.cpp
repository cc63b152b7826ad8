#include "poisloc/loc_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace poisloc {

Points unit_lattice(const Box& box) {
  const auto per_axis = static_cast<Index>(std::ceil(box.side - 1e-9));
  Index total = 1;
  for (int a = 0; a < box.dim; ++a) total *= per_axis;
  Points centers(box.dim, total);
  const Vec lo = box.lower();
  for (Index k = 0; k < total; ++k) {
    Index rem = k;
    for (int a = box.dim - 1; a >= 0; --a) {
      centers(a, k) = lo(a) + 0.5 + static_cast<double>(rem % per_axis);
      rem /= per_axis;
    }
  }
  return centers;
}

Vec localization_center(const Eigen::Ref<const Vec>& phi, const Grid& grid) {
  const Points centers = unit_lattice(grid.box);
  const Vec norms = local_norms(phi, grid, centers);
  Index best = 0;
  norms.maxCoeff(&best);
  return centers.col(best);
}

DecayFit decay_fit(const Eigen::Ref<const Vec>& phi, const Grid& grid, const Eigen::Ref<const Vec>& center,
                   FitWindow window) {
  const Points centers = unit_lattice(grid.box);
  const Vec norms = local_norms(phi, grid, centers);
  const double L = grid.box.side;
  DecayFit fit;
  fit.window_lo = window.inner_fraction * L;
  fit.window_hi = window.outer_fraction * L - window.outer_margin;
  const Vec lo = grid.box.lower();
  const Vec hi = grid.box.upper();
  std::set<long long> shells;
  for (Index c = 0; c < centers.cols(); ++c) {
    const Vec x = centers.col(c);
    const double to_boundary = std::min((x - lo).minCoeff(), (hi - x).minCoeff());
    if (to_boundary < window.boundary_shell) continue;
    const double dist = (x - center).norm();
    if (dist < fit.window_lo || dist > fit.window_hi) continue;
    if (!(norms(c) > window.floor)) continue;
    fit.distances.push_back(dist);
    fit.log_norms.push_back(std::log(norms(c)));
    shells.insert(std::llround(dist * 1e6));
  }
  fit.points = static_cast<Index>(fit.distances.size());
  fit.shells = static_cast<Index>(shells.size());
  if (fit.shells < window.min_shells)
    throw InsufficientDecayRange("decay_fit: insufficient decay range (" + std::to_string(fit.shells) +
                                 " usable distance shells)");
  const LinearFit lf = linear_fit(fit.distances, fit.log_norms);
  fit.rate = -lf.slope;
  fit.prefactor = std::exp(lf.intercept);
  fit.r2 = lf.r2;
  return fit;
}

void SudecParams::validate(int dim) const {
  if (!(nu > 0.5 * dim)) throw std::invalid_argument("SudecParams: nu must exceed d/2");
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("SudecParams: s must lie in (0, 1)");
  if (!(tau > 1.0)) throw std::invalid_argument("SudecParams: tau must exceed 1");
}

double weighted_norm(const Eigen::Ref<const Vec>& psi, const Grid& grid, double nu) {
  double s = 0.0;
  for (Index i = 0; i < grid.size(); ++i) {
    const double bracket2 = 1.0 + (grid.node(i) - grid.box.center).squaredNorm();
    s += psi(i) * psi(i) * std::pow(bracket2, -nu);
  }
  return std::sqrt(s * grid.cell_volume());
}

SudecFit sudec_fit(const std::vector<std::pair<Vec, Vec>>& pairs, const SudecParams& params, const Grid& grid) {
  params.validate(grid.box.dim);
  const Points centers = unit_lattice(grid.box);
  const Index M = centers.cols();
  Vec bracket_tau(M);
  for (Index c = 0; c < M; ++c)
    bracket_tau(c) = std::pow(std::sqrt(1.0 + (centers.col(c) - grid.box.center).squaredNorm()), params.tau);
  Eigen::MatrixXd stretched(M, M);
  for (Index x = 0; x < M; ++x)
    for (Index y = 0; y < M; ++y) stretched(x, y) = std::pow((centers.col(x) - centers.col(y)).norm(), params.s);

  SudecFit best;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& [psi, phi] = pairs[k];
    const Vec a = local_norms(psi, grid, centers);
    const Vec b = local_norms(phi, grid, centers);
    const double base = -std::log(weighted_norm(psi, grid, params.nu)) - std::log(weighted_norm(phi, grid, params.nu));
    for (Index x = 0; x < M; ++x) {
      if (a(x) <= 0.0) continue;
      const double la = std::log(a(x));
      for (Index y = 0; y < M; ++y) {
        if (b(y) <= 0.0) continue;
        const double value = la + std::log(b(y)) + base - bracket_tau(y) + stretched(x, y);
        if (value > best.log_constant) {
          best.log_constant = value;
          best.pair_index = static_cast<Index>(k);
          best.worst_x = centers.col(x);
          best.worst_y = centers.col(y);
        }
      }
    }
  }
  best.constant = std::exp(best.log_constant);
  return best;
}

DynamicalMoment dynamical_moment_weighted(const SpectralWindowResult& window, const Grid& grid,
                                          const Eigen::Ref<const Vec>& weight, const std::vector<double>& times) {
  DynamicalMoment m;
  m.times = times;
  m.window_count = window.eigenvalues.size();
  if (m.window_count == 0) {
    m.empty_window = true;
    m.trajectory.assign(times.size(), 0.0);
    return m;
  }
  const auto nodes = grid.nodes_in_cube(grid.box.center);
  const Eigen::MatrixXd& V = window.eigenvectors;
  Eigen::MatrixXd B(V.cols(), static_cast<Index>(nodes.size()));
  for (std::size_t c = 0; c < nodes.size(); ++c) B.col(static_cast<Index>(c)) = V.row(nodes[c]).transpose();
  const Vec w2 = weight.array().square();
  m.trajectory.reserve(times.size());
  for (double t : times) {
    const Vec cosines = (-t * window.eigenvalues.array()).cos();
    const Vec sines = (-t * window.eigenvalues.array()).sin();
    const Eigen::MatrixXd re = V * (cosines.asDiagonal() * B);
    const Eigen::MatrixXd im = V * (sines.asDiagonal() * B);
    const double value = (w2.asDiagonal() * (re.array().square() + im.array().square()).matrix()).sum();
    m.trajectory.push_back(value);
    m.sup = std::max(m.sup, value);
  }
  return m;
}

DynamicalMoment dynamical_moment(const SpectralWindowResult& window, const Grid& grid, double p,
                                 const std::vector<double>& times) {
  Vec weight(grid.size());
  for (Index i = 0; i < grid.size(); ++i)
    weight(i) = std::pow(1.0 + (grid.node(i) - grid.box.center).squaredNorm(), 0.5 * p);
  return dynamical_moment_weighted(window, grid, weight, times);
}

DynamicalMoment dynamical_moment(const DiscreteHamiltonian& H, double e0, double p, const std::vector<double>& times,
                                 EigenOptions options) {
  return dynamical_moment(eigen_window(H, Window{0.0, e0}, options), H.grid(), p, times);
}

std::map<Index, Index> multiplicity_histogram(std::span<const double> sorted_eigenvalues, double tol) {
  std::map<Index, Index> hist;
  std::size_t i = 0;
  while (i < sorted_eigenvalues.size()) {
    std::size_t j = i + 1;
    while (j < sorted_eigenvalues.size() && sorted_eigenvalues[j] - sorted_eigenvalues[j - 1] <= tol) ++j;
    ++hist[static_cast<Index>(j - i)];
    i = j;
  }
  return hist;
}

}  // namespace poisloc
