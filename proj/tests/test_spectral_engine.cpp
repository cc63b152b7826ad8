#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "poisloc/rng.hpp"
#include "poisloc/spectral_engine.hpp"

#include <cmath>
#include <complex>
#include <numbers>

using namespace poisloc;

namespace {

DiscreteHamiltonian random_hamiltonian(int d, double L, double h, std::uint64_t seed, double scale = 5.0) {
  const Grid g = build_grid(Box::centered(d, L), h);
  CounterRng rng(seed, Stream::Engineering);
  Vec V(g.size());
  for (Index i = 0; i < g.size(); ++i) V(i) = scale * rng.uniform();
  return assemble(g, V);
}

Eigen::MatrixXd block(const Eigen::MatrixXd& R, const std::vector<Index>& rows, const std::vector<Index>& cols) {
  Eigen::MatrixXd B(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) B(i, j) = R(rows[i], cols[j]);
  return B;
}

double spectral_norm(const Eigen::MatrixXd& M) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  return svd.singularValues()(0);
}

}  // namespace

TEST_CASE("free window eigenvalues match the sine formula") {
  const Grid g = build_grid(Box(1, Vec::Constant(1, 5.0), 10.0), 0.1);
  const auto H = assemble(g, Vec::Zero(g.size()));
  const auto r = eigen_window(H, {0.0, 1.0});
  CHECK(r.complete());
  const Index n = g.nodes_per_axis;
  Index expected = 0;
  for (Index k = 1; k <= n; ++k) {
    const double s = std::sin(k * std::numbers::pi / (2.0 * (n + 1)));
    const double lam = 400.0 * s * s;
    if (lam <= 1.0) {
      REQUIRE(expected < r.eigenvalues.size());
      CHECK(r.eigenvalues(expected) == doctest::Approx(lam).epsilon(1e-10));
      ++expected;
    }
  }
  CHECK(r.found_count == expected);
  CHECK(eigen_window(H, {-5.0, -1.0}).found_count == 0);
}

TEST_CASE("window agrees with the full dense spectrum and vectors are accurate") {
  const auto H = random_hamiltonian(2, 4.0, 0.25, 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.dense());
  const Window w{5.0, 25.0};
  const auto r = eigen_window(H, w);
  Index k = 0;
  for (Index i = 0; i < es.eigenvalues().size(); ++i)
    if (w.contains(es.eigenvalues()(i))) {
      REQUIRE(k < r.eigenvalues.size());
      CHECK(r.eigenvalues(k) == doctest::Approx(es.eigenvalues()(i)).epsilon(1e-10));
      ++k;
    }
  CHECK(r.found_count == k);
  CHECK(r.expected_count == k);
  const Eigen::MatrixXd gram = r.eigenvectors.transpose() * r.eigenvectors;
  CHECK((gram - Eigen::MatrixXd::Identity(k, k)).norm() < 1e-10);
  for (Index j = 0; j < k; ++j) {
    const Vec res = H.apply(r.eigenvectors.col(j)) - r.eigenvalues(j) * r.eigenvectors.col(j);
    CHECK(res.norm() <= 1e-8 * H.norm_bound());
  }
}

TEST_CASE("lanczos path agrees with the dense path") {
  const auto H = random_hamiltonian(1, 40.0, 0.1, 2);
  const Window w{0.5, 3.0};
  const auto dense = eigen_window(H, w);
  EigenOptions opts;
  opts.dense_cap = 10;
  const auto lanczos = eigen_window(H, w, opts);
  CHECK(lanczos.complete());
  REQUIRE(lanczos.eigenvalues.size() == dense.eigenvalues.size());
  CHECK((lanczos.eigenvalues - dense.eigenvalues).cwiseAbs().maxCoeff() < 1e-8);
  for (Index j = 0; j < dense.eigenvalues.size(); ++j)
    CHECK(std::abs(std::abs(lanczos.eigenvectors.col(j).dot(dense.eigenvectors.col(j))) - 1.0) < 1e-6);
  const auto nearest = nearest_eigenpairs(H, 1.7, 3, opts);
  CHECK(nearest.eigenvalues.size() == 3);
}

TEST_CASE("inertia counts match dense counts") {
  const auto H = random_hamiltonian(2, 3.0, 0.25, 3);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.dense(), Eigen::EigenvaluesOnly);
  for (double E : {-1.0, 3.0, 20.0, 60.0, 200.0}) {
    Index n = 0;
    for (Index i = 0; i < es.eigenvalues().size(); ++i) n += es.eigenvalues()(i) < E;
    CHECK(count_below(H, E) == n);
  }
}

TEST_CASE("resolvent norm is the inverse spectral distance") {
  const auto H = random_hamiltonian(1, 20.0, 0.1, 4);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.dense(), Eigen::EigenvaluesOnly);
  for (double E : {-1.0, 0.5, 2.0}) {
    const double gap = (es.eigenvalues().array() - E).abs().minCoeff();
    CHECK(spectral_distance(H, E) == doctest::Approx(gap).epsilon(1e-9));
    const auto p = resolvent_probe(H, E, {});
    CHECK(p.norm == doctest::Approx(1.0 / gap).epsilon(1e-9));
  }
}

TEST_CASE("localized resolvent blocks match a dense inverse") {
  const auto H = random_hamiltonian(2, 6.0, 0.25, 5);
  const double E = 1.3;
  const Index n = H.size();
  const Eigen::MatrixXd R = (H.dense() - E * Eigen::MatrixXd::Identity(n, n)).inverse();
  const Grid& g = H.grid();
  std::vector<std::pair<Vec, Vec>> pairs = {{Eigen::Vector2d(-2.5, -2.5), Eigen::Vector2d(2.5, 2.5)},
                                            {Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0.5, 0.5)},
                                            {Eigen::Vector2d(-1.5, 0.5), Eigen::Vector2d(1.5, -0.5)}};
  const auto p = resolvent_probe(H, E, pairs);
  REQUIRE(p.pairs.size() == pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double oracle = spectral_norm(block(R, g.nodes_in_cube(pairs[k].first), g.nodes_in_cube(pairs[k].second)));
    CHECK(p.pairs[k].norm == doctest::Approx(oracle).epsilon(1e-8));
    CHECK(p.pairs[k].norm <= p.norm * (1 + 1e-12));
    CHECK(p.pairs[k].distance == doctest::Approx((pairs[k].first - pairs[k].second).norm()));
  }
  // Enlarging the cube can only increase the block norm.
  const double small = spectral_norm(block(R, g.nodes_in_cube(pairs[2].first), g.nodes_in_cube(pairs[2].second)));
  const double large =
      spectral_norm(block(R, g.nodes_in_cube(pairs[2].first, 2.0), g.nodes_in_cube(pairs[2].second, 2.0)));
  CHECK(small <= large);
}

TEST_CASE("probing at an eigenvalue raises a resonance error") {
  const auto H = random_hamiltonian(1, 10.0, 0.1, 6);
  const auto w = eigen_window(H, {H.lower_bound(), H.lower_bound() + 50.0});
  REQUIRE(w.found_count > 0);
  CHECK_THROWS_AS(resolvent_probe(H, w.eigenvalues(0), {}), ResonanceError);
}

TEST_CASE("evolution at time zero and on a single node") {
  const auto H = random_hamiltonian(2, 3.0, 0.25, 7);
  CVec psi = CVec::Zero(H.size());
  psi(H.size() / 2) = 1.0;
  const auto out = evolve(H, psi, {0.0});
  CHECK((out[0] - psi).norm() == 0.0);

  const Grid one = build_grid(Box(1, Vec::Constant(1, 1.0), 2.0), 1.0);
  const auto H1 = assemble(one, Vec::Constant(1, 0.75));
  const CVec e = CVec::Constant(1, 1.0);
  for (double t : {0.3, 2.0, 11.0}) {
    const auto dense = evolve(H1, e, {t});
    const auto cheb = evolve_chebyshev(H1, e, {t});
    const std::complex<double> expected = std::exp(std::complex<double>(0.0, -t * 2.75));
    CHECK(std::abs(dense[0](0) - expected) < 1e-12);
    CHECK(std::abs(cheb[0](0) - expected) < 1e-8);
  }
}

TEST_CASE("evolution is unitary and both paths agree") {
  const auto H = random_hamiltonian(1, 20.0, 0.1, 8);
  CounterRng rng(9, Stream::Engineering);
  CVec a(H.size()), b(H.size());
  for (Index i = 0; i < H.size(); ++i) {
    a(i) = {rng.uniform() - 0.5, rng.uniform() - 0.5};
    b(i) = {rng.uniform() - 0.5, rng.uniform() - 0.5};
  }
  const std::vector<double> times = {0.5, 3.0, 20.0};
  const auto da = evolve(H, a, times), db = evolve(H, b, times);
  const auto ca = evolve_chebyshev(H, a, times);
  for (std::size_t k = 0; k < times.size(); ++k) {
    CHECK(da[k].norm() == doctest::Approx(a.norm()).epsilon(1e-10));
    CHECK(std::abs(da[k].dot(db[k]) - a.dot(b)) < 1e-10);
    CHECK((ca[k] - da[k]).norm() <= 1e-6 * a.norm());
  }
}
