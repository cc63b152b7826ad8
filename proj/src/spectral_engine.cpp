#include "poisloc/spectral_engine.hpp"

#include "poisloc/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

namespace poisloc {

namespace {

Eigen::SparseMatrix<double> shifted(const DiscreteHamiltonian& H, double sigma) {
  Eigen::SparseMatrix<double> I(H.size(), H.size());
  I.setIdentity();
  Eigen::SparseMatrix<double> A = H.sparse() - sigma * I;
  A.makeCompressed();
  return A;
}

class ShiftInvert {
 public:
  ShiftInvert(const DiscreteHamiltonian& H, double sigma) : A_(shifted(H, sigma)) {
    lu_.analyzePattern(A_);
    lu_.factorize(A_);
    ok_ = lu_.info() == Eigen::Success;
  }
  bool ok() const { return ok_; }
  template <class Rhs>
  Eigen::MatrixXd solve(const Rhs& b) const {
    return lu_.solve(b);
  }

 private:
  Eigen::SparseMatrix<double> A_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
  bool ok_ = false;
};

void orthogonalize(Eigen::Ref<Vec> w, const Eigen::MatrixXd& basis, Index cols) {
  if (cols == 0) return;
  for (int pass = 0; pass < 2; ++pass) {
    const Vec c = basis.leftCols(cols).transpose() * w;
    w -= basis.leftCols(cols) * c;
  }
}

Vec random_unit(Index n, CounterRng& rng) {
  Vec v(n);
  for (Index i = 0; i < n; ++i) v(i) = rng.uniform() - 0.5;
  return v / v.norm();
}

struct Locked {
  Eigen::MatrixXd vectors;
  std::vector<double> values;
  Index count() const { return static_cast<Index>(values.size()); }
};

/// Shift-invert Lanczos with full reorthogonalization. Ritz pairs are
/// accepted in order of decreasing |theta| (nearest to sigma first) while
/// they are converged and wanted; accepted pairs are locked and the process
/// restarts in their orthogonal complement.
Locked shift_invert_lanczos(const DiscreteHamiltonian& H, double sigma, Index target,
                            const std::function<bool(double)>& wanted, const EigenOptions& opt) {
  const Index N = H.size();
  Locked locked;
  locked.vectors.resize(N, std::min<Index>(N, target + 1));
  ShiftInvert op(H, sigma);
  if (!op.ok()) {
    // sigma is (numerically) an eigenvalue; nudge it.
    return shift_invert_lanczos(H, sigma + 1e-9 * std::max(1.0, H.norm_bound()), target, wanted, opt);
  }
  const double tol = opt.residual_tol * H.norm_bound();
  CounterRng rng(opt.seed, Stream::Krylov);

  for (int restart = 0; restart <= opt.max_restarts && locked.count() < target; ++restart) {
    const Index need = target - locked.count();
    const Index m = std::min<Index>(N - locked.count(), std::max<Index>(2 * need + 30, 40) << std::min(restart, 4));
    if (m <= 0) break;
    Eigen::MatrixXd V(N, m);
    Vec alpha = Vec::Zero(m), beta = Vec::Zero(m);
    Vec v = random_unit(N, rng);
    orthogonalize(v, locked.vectors, locked.count());
    v.normalize();
    Index steps = 0;
    for (Index j = 0; j < m; ++j) {
      V.col(j) = v;
      Vec w = op.solve(v);
      alpha(j) = w.dot(v);
      steps = j + 1;
      orthogonalize(w, locked.vectors, locked.count());
      orthogonalize(w, V, j + 1);
      beta(j) = w.norm();
      if (beta(j) < 1e-13 * std::max(1.0, std::abs(alpha(j)))) break;
      v = w / beta(j);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ts;
    ts.computeFromTridiagonal(alpha.head(steps), beta.head(std::max<Index>(0, steps - 1)));
    std::vector<Index> order(static_cast<std::size_t>(steps));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
      return std::abs(ts.eigenvalues()(a)) > std::abs(ts.eigenvalues()(b));
    });
    for (Index i : order) {
      if (locked.count() >= target) break;
      const double theta = ts.eigenvalues()(i);
      if (theta == 0.0) break;
      Vec x = V.leftCols(steps) * ts.eigenvectors().col(i);
      orthogonalize(x, locked.vectors, locked.count());
      x.normalize();
      const double lambda = x.dot(H.sparse() * x);
      const double res = (H.sparse() * x - lambda * x).norm();
      if (res > tol) break;
      if (!wanted(lambda)) break;
      if (locked.count() == locked.vectors.cols())
        locked.vectors.conservativeResize(N, std::min<Index>(N, 2 * locked.vectors.cols() + 1));
      locked.vectors.col(locked.count()) = x;
      locked.values.push_back(lambda);
    }
  }
  locked.vectors.conservativeResize(N, locked.count());
  return locked;
}

SpectralWindowResult finish(const DiscreteHamiltonian& H, Window window, Vec values, Eigen::MatrixXd vectors,
                            Index expected) {
  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return values(a) < values(b); });
  SpectralWindowResult r;
  r.window = window;
  r.eigenvalues.resize(values.size());
  r.eigenvectors.resize(H.size(), values.size());
  r.residuals.resize(values.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto i = static_cast<Index>(k);
    r.eigenvalues(i) = values(order[k]);
    r.eigenvectors.col(i) = vectors.col(order[k]);
    r.residuals(i) = (H.sparse() * r.eigenvectors.col(i) - r.eigenvalues(i) * r.eigenvectors.col(i)).norm();
  }
  r.expected_count = expected;
  r.found_count = values.size();
  return r;
}

}  // namespace

Index count_below(const DiscreteHamiltonian& H, double energy) {
  const Eigen::SparseMatrix<double> A = shifted(H, energy);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw std::runtime_error("count_below: LDL^T factorization failed");
  const Vec D = ldlt.vectorD();
  Index neg = 0;
  for (Index i = 0; i < D.size(); ++i) {
    if (D(i) == 0.0) {
      // E is an eigenvalue to machine precision; count it as not below.
      return count_below(H, std::nextafter(energy, -std::numeric_limits<double>::infinity()));
    }
    if (D(i) < 0.0) ++neg;
  }
  return neg;
}

SpectralWindowResult eigen_window(const DiscreteHamiltonian& H, Window window, EigenOptions options) {
  if (!(window.lo <= window.hi)) throw std::invalid_argument("eigen_window: empty window");
  const Index below_lo = count_below(H, window.lo);
  const Index below_hi = count_below(H, std::nextafter(window.hi, std::numeric_limits<double>::infinity()));
  const Index expected = below_hi - below_lo;

  if (H.size() <= options.dense_cap) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.dense(options.dense_cap));
    std::vector<Index> keep;
    for (Index i = 0; i < es.eigenvalues().size(); ++i)
      if (window.contains(es.eigenvalues()(i))) keep.push_back(i);
    Vec values(static_cast<Index>(keep.size()));
    Eigen::MatrixXd vectors(H.size(), static_cast<Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
      values(static_cast<Index>(k)) = es.eigenvalues()(keep[k]);
      vectors.col(static_cast<Index>(k)) = es.eigenvectors().col(keep[k]);
    }
    return finish(H, window, std::move(values), std::move(vectors), expected);
  }

  if (expected == 0) return finish(H, window, Vec(), Eigen::MatrixXd(H.size(), 0), 0);
  const double sigma = 0.5 * (window.lo + window.hi);
  const Locked l = shift_invert_lanczos(H, sigma, expected, [&](double x) { return window.contains(x); }, options);
  SpectralWindowResult r = finish(H, window, Eigen::Map<const Vec>(l.values.data(), l.count()), l.vectors, expected);
  if (!r.complete()) {
    std::ostringstream msg;
    msg << "eigen_window: found " << r.found_count << " of " << expected << " eigenpairs in [" << window.lo << ", "
        << window.hi << "]";
    throw ConvergenceError(msg.str(), std::move(r));
  }
  return r;
}

SpectralWindowResult nearest_eigenpairs(const DiscreteHamiltonian& H, double sigma, Index k, EigenOptions options) {
  k = std::min(k, H.size());
  const Locked l = shift_invert_lanczos(H, sigma, k, [](double) { return true; }, options);
  double radius = 0.0;
  for (double v : l.values) radius = std::max(radius, std::abs(v - sigma));
  SpectralWindowResult r =
      finish(H, Window{sigma - radius, sigma + radius}, Eigen::Map<const Vec>(l.values.data(), l.count()), l.vectors, k);
  if (!r.complete()) throw ConvergenceError("nearest_eigenpairs: Lanczos did not converge", std::move(r));
  return r;
}

double spectral_distance(const DiscreteHamiltonian& H, double energy, EigenOptions options) {
  if (H.size() <= options.dense_cap) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.dense(options.dense_cap), Eigen::EigenvaluesOnly);
    return (es.eigenvalues().array() - energy).abs().minCoeff();
  }
  ShiftInvert probe(H, energy);
  if (!probe.ok()) return 0.0;
  const SpectralWindowResult r = nearest_eigenpairs(H, energy, 1, options);
  return std::abs(r.eigenvalues(0) - energy);
}

ResolventProbe resolvent_probe(const DiscreteHamiltonian& H, double energy,
                               const std::vector<std::pair<Vec, Vec>>& probe_pairs, EigenOptions options) {
  ResolventProbe out;
  out.energy = energy;
  out.spectral_distance = spectral_distance(H, energy, options);
  if (out.spectral_distance <= kResonanceTol) {
    std::ostringstream msg;
    msg << "resolvent_probe: E = " << energy << " is within " << out.spectral_distance << " of the spectrum";
    throw ResonanceError(msg.str(), out.spectral_distance);
  }
  out.norm = 1.0 / out.spectral_distance;
  if (probe_pairs.empty()) return out;

  ShiftInvert solver(H, energy);
  if (!solver.ok()) throw ResonanceError("resolvent_probe: singular factorization", 0.0);
  const Grid& grid = H.grid();

  // One block solve per distinct target cube.
  std::map<std::vector<double>, Eigen::MatrixXd> columns;
  auto key_of = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  for (const auto& [x, y] : probe_pairs) {
    const auto key = key_of(y);
    if (columns.count(key)) continue;
    const auto nodes = grid.nodes_in_cube(y);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(H.size(), static_cast<Index>(nodes.size()));
    for (std::size_t c = 0; c < nodes.size(); ++c) rhs(nodes[c], static_cast<Index>(c)) = 1.0;
    columns.emplace(key, nodes.empty() ? Eigen::MatrixXd(H.size(), 0) : solver.solve(rhs));
  }
  out.pairs.reserve(probe_pairs.size());
  for (const auto& [x, y] : probe_pairs) {
    const Eigen::MatrixXd& W = columns.at(key_of(y));
    const auto rows = grid.nodes_in_cube(x);
    PairNorm p{x, y, (x - y).norm(), 0.0};
    if (!rows.empty() && W.cols() > 0) {
      Eigen::MatrixXd block(static_cast<Index>(rows.size()), W.cols());
      for (std::size_t r = 0; r < rows.size(); ++r) block.row(static_cast<Index>(r)) = W.row(rows[r]);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(block);
      p.norm = svd.singularValues()(0);
    }
    out.pairs.push_back(std::move(p));
  }
  return out;
}

namespace {

CVec apply_complex(const Eigen::SparseMatrix<double>& A, const CVec& v) {
  const Vec re = A * v.real();
  const Vec im = A * v.imag();
  CVec out(v.size());
  out.real() = re;
  out.imag() = im;
  return out;
}

std::vector<Index> time_order(const std::vector<double>& times) {
  std::vector<Index> order(times.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return times[static_cast<std::size_t>(a)] < times[static_cast<std::size_t>(b)];
  });
  return order;
}

}  // namespace

std::vector<CVec> evolve_chebyshev(const DiscreteHamiltonian& H, const CVec& psi0, const std::vector<double>& times,
                                   EvolveOptions options) {
  const double lo = H.lower_bound() - 1e-6;
  const double hi = H.upper_bound() + 1e-6;
  const double a = 0.5 * (hi - lo);
  const double b = 0.5 * (hi + lo);
  const auto& A = H.sparse();
  const std::complex<double> I(0.0, 1.0);

  auto step = [&](const CVec& psi, double dt) -> CVec {
    const double x = a * std::abs(dt);
    const double sign = dt < 0.0 ? -1.0 : 1.0;
    // Smallest degree past x where the Bessel tail drops below tolerance.
    int degree = static_cast<int>(std::ceil(x));
    while (std::abs(std::cyl_bessel_j(degree, x)) + std::abs(std::cyl_bessel_j(degree + 1, x)) >
           0.01 * options.tolerance) {
      if (++degree > options.max_degree) {
        std::ostringstream msg;
        msg << "evolve: Chebyshev degree exceeds " << options.max_degree << " for step argument " << x;
        throw std::runtime_error(msg.str());
      }
    }
    CVec prev = psi;
    CVec curr = (apply_complex(A, psi) - b * psi) / a;
    CVec acc = std::cyl_bessel_j(0, x) * prev;
    std::complex<double> phase = -I * sign;  // (-i sign)^k
    acc += 2.0 * phase * std::cyl_bessel_j(1, x) * curr;
    for (int k = 2; k <= degree; ++k) {
      CVec next = 2.0 * (apply_complex(A, curr) - b * curr) / a - prev;
      phase *= -I * sign;
      acc += 2.0 * phase * std::cyl_bessel_j(k, x) * next;
      prev = std::move(curr);
      curr = std::move(next);
    }
    return std::exp(-I * b * dt) * acc;
  };

  std::vector<CVec> out(times.size());
  CVec psi = psi0;
  double t_now = 0.0;
  for (Index idx : time_order(times)) {
    const double target = times[static_cast<std::size_t>(idx)];
    const double span = target - t_now;
    if (span != 0.0) {
      const auto nsteps = std::max<long>(1, static_cast<long>(std::ceil(a * std::abs(span) / options.max_step_argument)));
      const double dt = span / static_cast<double>(nsteps);
      for (long s = 0; s < nsteps; ++s) psi = step(psi, dt);
      t_now = target;
    }
    out[static_cast<std::size_t>(idx)] = psi;
  }
  return out;
}

std::vector<CVec> evolve(const DiscreteHamiltonian& H, const CVec& psi0, const std::vector<double>& times,
                         EvolveOptions options) {
  if (psi0.size() != H.size()) throw std::invalid_argument("evolve: state has wrong size");
  if (H.size() > options.dense_cap) return evolve_chebyshev(H, psi0, times, options);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.dense(options.dense_cap));
  const Eigen::MatrixXd& Q = es.eigenvectors();
  const Vec c_re = Q.transpose() * psi0.real();
  const Vec c_im = Q.transpose() * psi0.imag();
  std::vector<CVec> out;
  out.reserve(times.size());
  for (double t : times) {
    if (t == 0.0) {
      out.push_back(psi0);
      continue;
    }
    Vec re(c_re.size()), im(c_re.size());
    for (Index k = 0; k < c_re.size(); ++k) {
      const std::complex<double> c = std::complex<double>(c_re(k), c_im(k)) *
                                     std::exp(std::complex<double>(0.0, -t * es.eigenvalues()(k)));
      re(k) = c.real();
      im(k) = c.imag();
    }
    CVec psi(H.size());
    psi.real() = Q * re;
    psi.imag() = Q * im;
    out.push_back(std::move(psi));
  }
  return out;
}

}  // namespace poisloc
