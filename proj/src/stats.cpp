#include "poisloc/stats.hpp"

#include <unsupported/Eigen/SpecialFunctions>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace poisloc {

double poisson_log_pmf(std::int64_t k, double mean) {
  if (k < 0) return -std::numeric_limits<double>::infinity();
  if (mean == 0.0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  const double kd = static_cast<double>(k);
  return kd * std::log(mean) - mean - std::lgamma(kd + 1.0);
}

double poisson_pmf(std::int64_t k, double mean) { return std::exp(poisson_log_pmf(k, mean)); }

double poisson_cdf(std::int64_t k, double mean) {
  if (k < 0) return 0.0;
  // P{N <= k} = Q(k + 1, mean)
  return Eigen::numext::igammac(static_cast<double>(k) + 1.0, mean);
}

double chi_square_sf(double statistic, int dof) {
  if (dof <= 0) return 1.0;
  if (statistic <= 0.0) return 1.0;
  return Eigen::numext::igammac(0.5 * dof, 0.5 * statistic);
}

namespace {

// Pools consecutive categories so that each pooled expected count reaches
// min_expected; the trailing remainder joins the last pool.
ChiSquareResult pooled_statistic(std::span<const double> observed, std::span<const double> expected,
                                 double min_expected) {
  std::vector<double> obs_pool;
  std::vector<double> exp_pool;
  double o = 0.0;
  double e = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    o += observed[i];
    e += expected[i];
    if (e >= min_expected) {
      obs_pool.push_back(o);
      exp_pool.push_back(e);
      o = 0.0;
      e = 0.0;
    }
  }
  if (e > 0.0 || o > 0.0) {
    if (exp_pool.empty()) {
      obs_pool.push_back(o);
      exp_pool.push_back(e);
    } else {
      obs_pool.back() += o;
      exp_pool.back() += e;
    }
  }
  ChiSquareResult r;
  for (std::size_t i = 0; i < obs_pool.size(); ++i) {
    const double diff = obs_pool[i] - exp_pool[i];
    r.statistic += diff * diff / exp_pool[i];
  }
  r.dof = static_cast<int>(obs_pool.size()) - 1;
  r.p_value = chi_square_sf(r.statistic, r.dof);
  return r;
}

}  // namespace

ChiSquareResult chi_square_gof(std::span<const double> observed,
                               std::span<const double> probabilities, double min_expected) {
  if (observed.size() != probabilities.size())
    throw std::invalid_argument("chi_square_gof: size mismatch");
  const double n = std::accumulate(observed.begin(), observed.end(), 0.0);
  std::vector<double> expected(probabilities.size());
  for (std::size_t i = 0; i < expected.size(); ++i) expected[i] = n * probabilities[i];
  return pooled_statistic(observed, expected, min_expected);
}

ChiSquareResult chi_square_poisson(std::span<const std::int64_t> samples, double mean,
                                   double min_expected) {
  if (samples.empty()) throw std::invalid_argument("chi_square_poisson: no samples");
  const std::int64_t kmax = *std::max_element(samples.begin(), samples.end());
  if (*std::min_element(samples.begin(), samples.end()) < 0)
    throw std::invalid_argument("chi_square_poisson: negative sample");
  // Categories 0..kmax, with the last one absorbing the upper tail.
  std::vector<double> observed(static_cast<std::size_t>(kmax) + 1, 0.0);
  for (auto k : samples) observed[static_cast<std::size_t>(k)] += 1.0;
  std::vector<double> probs(observed.size());
  double acc = 0.0;
  for (std::int64_t k = 0; k < kmax; ++k) {
    probs[static_cast<std::size_t>(k)] = poisson_pmf(k, mean);
    acc += probs[static_cast<std::size_t>(k)];
  }
  probs.back() = std::max(0.0, 1.0 - acc);
  return chi_square_gof(observed, probs, min_expected);
}

namespace {

std::vector<std::vector<Eigen::Index>> pool_indices(const Eigen::VectorXd& marginal,
                                                    double min_marginal) {
  std::vector<std::vector<Eigen::Index>> groups;
  std::vector<Eigen::Index> current;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < marginal.size(); ++i) {
    current.push_back(i);
    acc += marginal(i);
    if (acc >= min_marginal) {
      groups.push_back(current);
      current.clear();
      acc = 0.0;
    }
  }
  if (!current.empty()) {
    if (groups.empty())
      groups.push_back(current);
    else
      groups.back().insert(groups.back().end(), current.begin(), current.end());
  }
  return groups;
}

}  // namespace

ChiSquareResult chi_square_independence(const Eigen::MatrixXd& table, double min_marginal) {
  const auto rows = pool_indices(table.rowwise().sum(), min_marginal);
  const auto cols = pool_indices(table.colwise().sum().transpose(), min_marginal);
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()),
                                                 static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      for (auto i : rows[r])
        for (auto j : cols[c]) pooled(r, c) += table(i, j);

  const double n = pooled.sum();
  const Eigen::VectorXd rs = pooled.rowwise().sum();
  const Eigen::VectorXd cs = pooled.colwise().sum().transpose();
  ChiSquareResult res;
  for (Eigen::Index r = 0; r < pooled.rows(); ++r)
    for (Eigen::Index c = 0; c < pooled.cols(); ++c) {
      const double e = rs(r) * cs(c) / n;
      if (e > 0.0) res.statistic += (pooled(r, c) - e) * (pooled(r, c) - e) / e;
    }
  res.dof = static_cast<int>((pooled.rows() - 1) * (pooled.cols() - 1));
  res.p_value = chi_square_sf(res.statistic, res.dof);
  return res;
}

Interval wilson_interval(std::int64_t successes, std::int64_t n, double z) {
  if (n <= 0) throw std::invalid_argument("wilson_interval: n must be positive");
  const double nd = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nd;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nd;
  const double center = (p + z2 / (2.0 * nd)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nd + z2 / (4.0 * nd * nd)) / denom;
  return {successes == 0 ? 0.0 : std::max(0.0, center - half), successes == n ? 1.0 : std::min(1.0, center + half)};
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("linear_fit: size mismatch");
  if (x.size() < 2) throw std::invalid_argument("linear_fit: need at least two points");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("linear_fit: x has no spread");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 0.0;
  f.count = static_cast<Eigen::Index>(x.size());
  return f;
}

}  // namespace poisloc
