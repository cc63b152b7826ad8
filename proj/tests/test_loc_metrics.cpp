#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "poisloc/loc_metrics.hpp"
#include "poisloc/rng.hpp"

#include <cmath>

using namespace poisloc;

namespace {

Vec exponential_profile(const Grid& g, const Vec& c, double m) {
  Vec v(g.size());
  for (Index i = 0; i < g.size(); ++i) v(i) = std::exp(-m * (g.node(i) - c).norm());
  return v;
}

}  // namespace

TEST_CASE("unit lattice tiles the box") {
  const Box b = Box::centered(2, 4.0);
  const Points c = unit_lattice(b);
  CHECK(c.cols() == 16);
  CHECK(c.col(0)(0) == doctest::Approx(-1.5));
  CHECK(c.col(15)(1) == doctest::Approx(1.5));
  const Grid g = build_grid(b, 0.25);
  const Vec phi = Vec::Ones(g.size());
  const Vec norms = local_norms(phi, g, c);
  CHECK(norms.squaredNorm() == doctest::Approx(phi.squaredNorm() * g.cell_volume()).epsilon(1e-12));
}

TEST_CASE("inverse participation ratio of extreme vectors") {
  const Grid g = build_grid(Box::centered(2, 4.0), 0.25);
  Vec delta = Vec::Zero(g.size());
  delta(7) = 3.0;
  CHECK(ipr(delta, g) == doctest::Approx(1.0 / g.cell_volume()).epsilon(1e-12));
  const Vec flat = Vec::Constant(g.size(), 0.2);
  CHECK(ipr(flat, g) == doctest::Approx(1.0 / (g.size() * g.cell_volume())).epsilon(1e-12));
  CHECK_THROWS(ipr(Vec::Zero(g.size()), g));
}

TEST_CASE("decay fit recovers synthetic exponential rates") {
  const Grid g1 = build_grid(Box::centered(1, 40.0), 0.1);
  const Grid g2 = build_grid(Box::centered(2, 30.0), 0.25);
  for (double m : {0.5, 1.0, 2.0}) {
    const Vec c1 = Vec::Constant(1, 0.5);
    const auto f1 = decay_fit(exponential_profile(g1, c1, m), g1, c1);
    CHECK(f1.rate == doctest::Approx(m).epsilon(0.05));
    CHECK(f1.r2 > 0.99);
    const Vec c2 = Vec::Constant(2, 0.5);
    const auto f2 = decay_fit(exponential_profile(g2, c2, m), g2, c2);
    CHECK(f2.rate == doctest::Approx(m).epsilon(0.05));
    CHECK(f2.r2 > 0.95);
  }
}

TEST_CASE("decay fit of a flat vector has no rate") {
  const Grid g = build_grid(Box::centered(1, 40.0), 0.1);
  const auto f = decay_fit(Vec::Ones(g.size()), g, Vec::Constant(1, 0.5));
  CHECK(std::abs(f.rate) < 0.02);
  CHECK(f.r2 < 0.5);
}

TEST_CASE("decay fit needs enough distance shells") {
  const Grid g = build_grid(Box::centered(1, 8.0), 0.1);
  CHECK_THROWS_AS(decay_fit(Vec::Ones(g.size()), g, Vec::Constant(1, 0.5)), InsufficientDecayRange);
}

TEST_CASE("localization center is the cube of largest mass") {
  const Grid g = build_grid(Box::centered(2, 10.0), 0.25);
  const Vec c = Eigen::Vector2d(2.5, -1.5);
  CHECK((localization_center(exponential_profile(g, c, 1.0), g) - c).norm() < 1e-12);
}

TEST_CASE("sudec constant is invariant under scaling the pair") {
  const Grid g = build_grid(Box::centered(1, 12.0), 0.25);
  const Vec psi = exponential_profile(g, Vec::Constant(1, 0.5), 1.0);
  const Vec phi = exponential_profile(g, Vec::Constant(1, -1.5), 0.7);
  const auto a = sudec_fit({{psi, phi}}, {}, g);
  const auto b = sudec_fit({{3.0 * psi, phi / 7.0}}, {}, g);
  CHECK(std::abs(a.log_constant - b.log_constant) <= 1e-12 * std::max(1.0, std::abs(a.log_constant)));
  CHECK(std::isfinite(a.log_constant));
  CHECK_THROWS(sudec_fit({{psi, phi}}, SudecParams{0.4, 1.1, 0.9}, g));
  CHECK_THROWS(sudec_fit({{psi, phi}}, SudecParams{1.0, 1.0, 0.9}, g));
  CHECK_THROWS(sudec_fit({{psi, phi}}, SudecParams{1.0, 1.1, 1.0}, g));
}

TEST_CASE("sudec constant of a single pair matches a direct maximisation") {
  const Grid g = build_grid(Box::centered(1, 6.0), 0.5);
  CounterRng rng(3, Stream::Engineering);
  Vec psi(g.size()), phi(g.size());
  for (Index i = 0; i < g.size(); ++i) {
    psi(i) = rng.uniform() + 0.1;
    phi(i) = rng.uniform() + 0.1;
  }
  const SudecParams p;
  const Points centers = unit_lattice(g.box);
  const Vec a = local_norms(psi, g, centers), b = local_norms(phi, g, centers);
  double best = 0.0;
  for (Index x = 0; x < centers.cols(); ++x)
    for (Index y = 0; y < centers.cols(); ++y) {
      const double ty = std::pow(1.0 + centers.col(y).squaredNorm(), p.tau / 2);
      const double dxy = std::pow((centers.col(x) - centers.col(y)).norm(), p.s);
      best = std::max(best, a(x) * b(y) * std::exp(dxy - ty) /
                                (weighted_norm(psi, g, p.nu) * weighted_norm(phi, g, p.nu)));
    }
  CHECK(sudec_fit({{psi, phi}}, p, g).constant == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("dynamical moment against direct propagation") {
  const Grid g = build_grid(Box::centered(1, 10.0), 0.25);
  CounterRng rng(4, Stream::Engineering);
  Vec V(g.size());
  for (Index i = 0; i < g.size(); ++i) V(i) = 2.0 * rng.uniform();
  const auto H = assemble(g, V);
  const auto all = eigen_window(H, {H.lower_bound() - 1.0, H.upper_bound() + 1.0});
  REQUIRE(all.found_count == g.size());
  const std::vector<double> times = {0.0, 0.7, 3.0};
  const double p = 2.0;
  const auto m = dynamical_moment(all, g, p, times);
  const auto cube = g.nodes_in_cube(g.box.center);
  for (std::size_t k = 0; k < times.size(); ++k) {
    double oracle = 0.0;
    for (Index j : cube) {
      CVec e = CVec::Zero(g.size());
      e(j) = 1.0;
      const CVec psi = evolve(H, e, {times[k]})[0];
      for (Index i = 0; i < g.size(); ++i) oracle += std::pow(1.0 + g.node(i).squaredNorm(), p) * std::norm(psi(i));
    }
    CHECK(m.trajectory[k] == doctest::Approx(oracle).epsilon(1e-9));
  }
  CHECK(m.sup == doctest::Approx(*std::max_element(m.trajectory.begin(), m.trajectory.end())));
  const auto empty = dynamical_moment(H, 0.01, p, times);
  CHECK(empty.empty_window);
  CHECK(empty.sup == 0.0);
}

TEST_CASE("multiplicity histogram") {
  const std::vector<double> ev = {1.0, 1.0 + 1e-12, 2.0, 3.0, 3.0, 3.0 + 5e-13};
  const auto h = multiplicity_histogram(ev, 1e-9);
  CHECK(h.at(1) == 1);
  CHECK(h.at(2) == 1);
  CHECK(h.at(3) == 1);
}
