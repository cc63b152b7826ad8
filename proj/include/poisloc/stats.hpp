#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace poisloc {

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  bool passes(double significance) const { return p_value > significance; }
};

/// log P{N = k} for N ~ Poisson(mean).
double poisson_log_pmf(std::int64_t k, double mean);
double poisson_pmf(std::int64_t k, double mean);
/// P{N <= k}.
double poisson_cdf(std::int64_t k, double mean);

/// Goodness of fit of integer samples against Poisson(mean). Adjacent
/// categories are pooled until every expected count is >= min_expected;
/// both tails are folded into the outermost categories.
ChiSquareResult chi_square_poisson(std::span<const std::int64_t> samples, double mean,
                                   double min_expected = 5.0);

/// Goodness of fit of category counts against probabilities (which must sum
/// to 1). Categories are pooled left to right until expected >= min_expected.
ChiSquareResult chi_square_gof(std::span<const double> observed,
                               std::span<const double> probabilities,
                               double min_expected = 5.0);

/// Pearson test of independence on a contingency table. Rows and columns
/// with small marginals are pooled into their neighbours beforehand.
ChiSquareResult chi_square_independence(const Eigen::MatrixXd& table,
                                        double min_marginal = 25.0);

/// Upper tail of the chi-square distribution.
double chi_square_sf(double statistic, int dof);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
  bool overlaps(const Interval& o) const { return lo <= o.hi && o.lo <= hi; }
};

inline constexpr double kZ95 = 1.959963984540054;

/// Wilson score interval for a binomial proportion.
Interval wilson_interval(std::int64_t successes, std::int64_t n, double z = kZ95);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  Eigen::Index count = 0;
};

/// Ordinary least squares y = slope * x + intercept. R^2 is 0 when y has no
/// variance.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

}  // namespace poisloc
