#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "poisloc/stats.hpp"

#include <cmath>
#include <numeric>

using namespace poisloc;

TEST_CASE("poisson mass function matches the factorial form") {
  const double mean = 3.7;
  double factorial = 1.0;
  double total = 0.0;
  for (int k = 0; k < 60; ++k) {
    if (k > 0) factorial *= k;
    const double direct = std::pow(mean, k) / factorial * std::exp(-mean);
    CHECK(poisson_pmf(k, mean) == doctest::Approx(direct).epsilon(1e-12));
    total += poisson_pmf(k, mean);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(poisson_cdf(4, mean) ==
        doctest::Approx(poisson_pmf(0, mean) + poisson_pmf(1, mean) + poisson_pmf(2, mean) + poisson_pmf(3, mean) +
                        poisson_pmf(4, mean)));
  CHECK(poisson_pmf(-1, mean) == 0.0);
}

TEST_CASE("chi-square survival function known values") {
  CHECK(chi_square_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-9));
  for (double x : {0.5, 2.0, 7.0}) CHECK(chi_square_sf(x, 2) == doctest::Approx(std::exp(-x / 2)).epsilon(1e-12));
  CHECK(chi_square_sf(0.0, 5) == doctest::Approx(1.0));
}

TEST_CASE("goodness of fit on exact proportions has zero statistic") {
  const std::vector<double> probs = {0.1, 0.2, 0.3, 0.4};
  const std::vector<double> observed = {100, 200, 300, 400};
  const auto r = chi_square_gof(observed, probs);
  CHECK(r.statistic == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.dof == 3);
  CHECK(r.p_value == doctest::Approx(1.0));
}

TEST_CASE("goodness of fit pools small categories") {
  // Expected counts 2, 2, 2, 2, 992 pool into two categories.
  const std::vector<double> probs = {0.002, 0.002, 0.002, 0.002, 0.992};
  const std::vector<double> observed = {2, 2, 2, 2, 992};
  const auto r = chi_square_gof(observed, probs);
  CHECK(r.dof == 1);
  CHECK(r.statistic == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("independence test on a product table") {
  Eigen::MatrixXd t(2, 3);
  t << 100, 200, 300, 200, 400, 600;
  const auto r = chi_square_independence(t);
  CHECK(r.statistic == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.dof == 2);
}

TEST_CASE("poisson samples drawn from the exact law pass") {
  // Deterministic sample with frequencies proportional to the mass function.
  std::vector<std::int64_t> samples;
  for (int k = 0; k < 40; ++k)
    for (int i = 0; i < static_cast<int>(std::round(1e5 * poisson_pmf(k, 10.0))); ++i) samples.push_back(k);
  const auto r = chi_square_poisson(samples, 10.0);
  CHECK(r.passes(0.01));
  CHECK(r.p_value > 0.99);
}

TEST_CASE("wilson interval closed form at full success") {
  const Interval iv = wilson_interval(100, 100);
  const double z2 = kZ95 * kZ95;
  CHECK(iv.lo == doctest::Approx(100.0 / (100.0 + z2)).epsilon(1e-12));
  CHECK(iv.lo == doctest::Approx(0.96301).epsilon(1e-5));
  CHECK(iv.hi == doctest::Approx(1.0));
  for (int s : {0, 1, 37, 50, 99}) {
    const Interval w = wilson_interval(s, 100);
    CHECK(w.contains(s / 100.0));
    CHECK(w.lo >= 0.0);
    CHECK(w.hi <= 1.0);
  }
}

TEST_CASE("interval overlap") {
  CHECK(Interval{0.1, 0.3}.overlaps({0.25, 0.5}));
  CHECK_FALSE(Interval{0.1, 0.2}.overlaps({0.25, 0.5}));
}

TEST_CASE("least squares recovers an exact line") {
  std::vector<double> x(20), y(20);
  std::iota(x.begin(), x.end(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = -1.5 * x[i] + 4.0;
  const auto f = linear_fit(x, y);
  CHECK(f.slope == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK(f.intercept == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(f.r2 == doctest::Approx(1.0));
  const std::vector<double> flat(20, 2.0);
  CHECK(linear_fit(x, flat).r2 == 0.0);
}
