#include "poisloc/operator_core.hpp"

#include "poisloc/stats.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace poisloc {

Index Grid::size() const {
  Index s = 1;
  for (int a = 0; a < box.dim; ++a) s *= nodes_per_axis;
  return s;
}

std::vector<Index> Grid::multi_index(Index index) const {
  std::vector<Index> m(static_cast<std::size_t>(box.dim));
  for (int a = box.dim - 1; a >= 0; --a) {
    m[static_cast<std::size_t>(a)] = index % nodes_per_axis;
    index /= nodes_per_axis;
  }
  return m;
}

Index Grid::index_of(const std::vector<Index>& multi) const {
  Index i = 0;
  for (auto m : multi) i = i * nodes_per_axis + m;
  return i;
}

Vec Grid::node(Index index) const {
  const auto m = multi_index(index);
  Vec x = box.lower();
  for (int a = 0; a < box.dim; ++a) x(a) += static_cast<double>(m[static_cast<std::size_t>(a)] + 1) * spacing;
  return x;
}

double Grid::cell_volume() const { return std::pow(spacing, box.dim); }

namespace {

// Rounds to the nearest integer when within 1e-9, so that adjacent cubes
// sharing a face agree on which nodes lie on it.
double snap_integer(double t) {
  const double r = std::round(t);
  return std::abs(t - r) < 1e-9 ? r : t;
}

}  // namespace

std::vector<Index> Grid::nodes_in_cube(const Eigen::Ref<const Vec>& c, double side) const {
  const Vec lo = box.lower();
  std::vector<Index> first(static_cast<std::size_t>(box.dim)), last(static_cast<std::size_t>(box.dim));
  for (int a = 0; a < box.dim; ++a) {
    const double t_lo = snap_integer((c(a) - 0.5 * side - lo(a)) / spacing - 1.0);
    const double t_hi = snap_integer((c(a) + 0.5 * side - lo(a)) / spacing - 1.0);
    const auto i0 = std::max<Index>(0, static_cast<Index>(std::ceil(t_lo)));
    const auto i1 = std::min<Index>(nodes_per_axis - 1, static_cast<Index>(std::ceil(t_hi)) - 1);
    if (i0 > i1) return {};
    first[static_cast<std::size_t>(a)] = i0;
    last[static_cast<std::size_t>(a)] = i1;
  }
  std::vector<Index> out;
  std::vector<Index> m = first;
  for (;;) {
    out.push_back(index_of(m));
    int a = box.dim - 1;
    while (a >= 0 && ++m[static_cast<std::size_t>(a)] > last[static_cast<std::size_t>(a)]) {
      m[static_cast<std::size_t>(a)] = first[static_cast<std::size_t>(a)];
      --a;
    }
    if (a < 0) break;
  }
  return out;
}

Grid build_grid(const Box& box, double h, Index cap) {
  if (!(h > 0.0)) throw std::invalid_argument("build_grid: spacing must be > 0");
  const double ratio = box.side / h;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9) {
    std::ostringstream msg;
    msg << "build_grid: spacing " << h << " does not divide side " << box.side;
    throw std::invalid_argument(msg.str());
  }
  const auto n = static_cast<Index>(rounded) - 1;
  if (n < 1) throw std::invalid_argument("build_grid: no interior nodes");
  if (std::pow(static_cast<double>(n), box.dim) > static_cast<double>(cap)) {
    std::ostringstream msg;
    msg << "build_grid: " << n << "^" << box.dim << " unknowns exceed the cap " << cap;
    throw std::length_error(msg.str());
  }
  return Grid{box, h, n};
}

DiscreteHamiltonian::DiscreteHamiltonian(Grid grid, Vec potential)
    : grid_(std::move(grid)), potential_(std::move(potential)) {
  if (potential_.size() != grid_.size()) throw std::invalid_argument("DiscreteHamiltonian: potential size mismatch");
  if (!potential_.allFinite()) throw std::invalid_argument("DiscreteHamiltonian: potential is not finite");
  const Index n = grid_.nodes_per_axis;
  const int d = grid_.box.dim;
  const double inv_h2 = 1.0 / (grid_.spacing * grid_.spacing);
  Index stride[3] = {1, 1, 1};
  for (int a = d - 2; a >= 0; --a) stride[a] = stride[a + 1] * n;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(size() * (2 * d + 1)));
  for (Index i = 0; i < size(); ++i) {
    t.emplace_back(i, i, 2.0 * d * inv_h2 + potential_(i));
    for (int a = 0; a < d; ++a) {
      const Index coord = (i / stride[a]) % n;
      if (coord > 0) t.emplace_back(i, i - stride[a], -inv_h2);
      if (coord + 1 < n) t.emplace_back(i, i + stride[a], -inv_h2);
    }
  }
  matrix_.resize(size(), size());
  matrix_.setFromTriplets(t.begin(), t.end());
  matrix_.makeCompressed();
}

Eigen::MatrixXd DiscreteHamiltonian::dense(Index cap) const {
  if (size() > cap) {
    std::ostringstream msg;
    msg << "dense operator requested for " << size() << " unknowns, cap is " << cap;
    throw std::length_error(msg.str());
  }
  return Eigen::MatrixXd(matrix_);
}

double DiscreteHamiltonian::lower_bound() const { return potential_.minCoeff(); }

double DiscreteHamiltonian::upper_bound() const {
  const double h = grid_.spacing;
  return potential_.maxCoeff() + 4.0 * grid_.box.dim / (h * h);
}

DiscreteHamiltonian assemble(const Grid& grid, const Eigen::Ref<const Vec>& potential) {
  return DiscreteHamiltonian(grid, potential);
}

void write_triplets(std::ostream& out, const Eigen::SparseMatrix<double>& m) {
  for (Index k = 0; k < m.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

double GammaOperator::norm() const {
  if (eigenvalues.size() == 0) return 0.0;
  return std::max(std::abs(eigenvalues(0)), std::abs(eigenvalues(eigenvalues.size() - 1)));
}

Vec GammaOperator::top_vector() const {
  const Index last = eigenvalues.size() - 1;
  return std::abs(eigenvalues(0)) > std::abs(eigenvalues(last)) ? Vec(eigenvectors.col(0))
                                                                 : Vec(eigenvectors.col(last));
}

double GammaOperator::top_gap() const {
  if (eigenvalues.size() < 2) return std::numeric_limits<double>::infinity();
  Vec mags = eigenvalues.cwiseAbs();
  std::sort(mags.data(), mags.data() + mags.size());
  return mags(mags.size() - 1) - mags(mags.size() - 2);
}

GammaOperator build_gamma(const Grid& grid, const Eigen::Ref<const Vec>& v1, const Eigen::Ref<const Vec>& v2,
                          double energy, Index cap) {
  if (grid.size() > cap) {
    std::ostringstream msg;
    msg << "build_gamma: " << grid.size() << " unknowns exceed the dense cap " << cap;
    throw std::length_error(msg.str());
  }
  GammaOperator g;
  g.grid = grid;
  g.energy = energy;
  g.v1 = v1;
  g.v2 = v2;
  g.multiplier = (1.0 + energy) - v1.array();
  Eigen::MatrixXd shifted = assemble(grid, v2).dense(cap);
  shifted.diagonal().array() += 1.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(shifted);
  const Vec inv_root = es.eigenvalues().array().rsqrt();
  g.inv_sqrt = es.eigenvectors() * inv_root.asDiagonal() * es.eigenvectors().transpose();
  g.gamma = g.inv_sqrt * g.multiplier.asDiagonal() * g.inv_sqrt;
  g.gamma = 0.5 * (g.gamma + g.gamma.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gs(g.gamma);
  g.eigenvalues = gs.eigenvalues();
  g.eigenvectors = gs.eigenvectors();
  return g;
}

GammaOperator build_gamma(const Grid& grid, const SplitSelection& sel, double energy, Index cap) {
  return build_gamma(grid, sample_field(grid, sel.v1), sample_field(grid, sel.v2), energy, cap);
}

GammaReport gamma_diagnostics(const GammaOperator& gamma, const SplitSelection& sel, double e0,
                              GammaDiagnosticsOptions options) {
  GammaReport r;
  const Grid& grid = gamma.grid;
  const int d = grid.box.dim;
  r.e0 = e0;
  r.gamma_norm = gamma.norm();
  r.hypothesis = r.gamma_norm > 1.0 - e0;
  r.average_constant = options.average_constant;
  r.averaging_radius = options.averaging_radius > 0.0 ? options.averaging_radius : 10.0 * sel.ell;
  if (!r.hypothesis) return r;

  r.degenerate_top = gamma.top_gap() < 1e-10;
  const double vol = grid.cell_volume();
  const Vec f = gamma.top_vector() / std::sqrt(vol);  // unit in discrete L^2
  Vec g = gamma.inv_sqrt * f;
  r.g_norm = std::sqrt(vol) * g.norm();
  r.grad_norm = gradient_norm(g, grid);
  r.norm_window_ok = r.g_norm >= 1.0 - std::sqrt(e0) - 1e-12 && r.g_norm <= 1.0 + 1e-12;
  r.gradient_ok = r.grad_norm <= 2.0 * std::pow(e0, 0.25) + 1e-12;

  const double step = options.shift_step > 0.0 ? options.shift_step : sel.cells.cell_side;
  const auto per_axis = static_cast<Index>(std::floor(0.5 * grid.box.side / step + 1e-9));
  const Index width = 2 * per_axis + 1;
  Index total = 1;
  for (int a = 0; a < d; ++a) total *= width;
  r.shifts.resize(d, total);
  r.pairings.resize(total);
  std::vector<double> dist, pair;
  const double e0_quarter = std::pow(e0, 0.25);
  Vec shifted_v1(grid.size());
  for (Index k = 0; k < total; ++k) {
    Index rem = k;
    Vec a(d);
    for (int ax = d - 1; ax >= 0; --ax) {
      a(ax) = static_cast<double>(rem % width - per_axis) * step;
      rem /= width;
    }
    r.shifts.col(k) = a;
    for (Index i = 0; i < grid.size(); ++i) shifted_v1(i) = sel.v1.translated(grid.node(i), a);
    const double p = vol * (shifted_v1.array() * g.array().square()).sum();
    r.pairings(k) = p;
    dist.push_back(a.norm());
    pair.push_back(p);
    r.pairing_constant = std::max(r.pairing_constant, p / (e0_quarter * (a.norm() + 1.0)));
  }
  r.pairing_nonnegative = (r.pairings.array() >= 0.0).all();
  if (total > 1) r.pairing_slope = linear_fit(dist, pair).slope;

  const double K = r.averaging_radius;
  r.contradiction_lhs = r.average_constant * std::pow(1.0 - std::sqrt(e0), 2);
  // Integrating c E0^{1/4} (|a| + 1) over [-K, K]^d is at most
  // c E0^{1/4} (sqrt(d) K + 1) (2K)^d.
  r.contradiction_rhs =
      r.pairing_constant * e0_quarter * (std::sqrt(static_cast<double>(d)) * K + 1.0) * std::pow(2.0 * K, d);
  r.contradiction = r.contradiction_lhs > r.contradiction_rhs;
  r.g = std::move(g);
  return r;
}

}  // namespace poisloc
