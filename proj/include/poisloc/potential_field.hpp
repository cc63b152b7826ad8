#pragma once

#include "poisloc/point_process.hpp"

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

namespace poisloc {

/// Radial single-site profile. The only profile is the polynomial bump
/// u(x) = (1 - |x|^2 / r^2)^2 on |x| < r, zero elsewhere.
struct SingleSiteSpec {
  std::string profile = "poly_bump";
  double radius = 0.5;

  void validate() const;
};

double eval_single_site(const SingleSiteSpec& spec, const Eigen::Ref<const Vec>& x);
Vec single_site_gradient(const SingleSiteSpec& spec, const Eigen::Ref<const Vec>& x);
/// sup |grad u| = 8 / (3 sqrt(3) r), attained at |x| = r / sqrt(3).
double single_site_gradient_bound(const SingleSiteSpec& spec);

void to_json(nlohmann::json& j, const SingleSiteSpec& spec);
void from_json(const nlohmann::json& j, SingleSiteSpec& spec);

/// Weighted sum of translated single-site bumps with a bucket index, so a
/// point evaluation touches only sites within the support radius.
class PotentialField {
 public:
  PotentialField(Points sites, Vec weights, SingleSiteSpec spec);
  /// Sites of `config` weighted by t * eps.
  PotentialField(const PointConfig& config, SingleSiteSpec spec);

  double operator()(const Eigen::Ref<const Vec>& x) const;
  /// Value of the field translated by a: V(x - a).
  double translated(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& a) const {
    return (*this)(x - a);
  }

  const Points& sites() const { return sites_; }
  const Vec& weights() const { return weights_; }
  const SingleSiteSpec& spec() const { return spec_; }
  int dim() const { return static_cast<int>(sites_.rows()); }

 private:
  using Key = std::array<std::int64_t, 3>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };
  Key bucket_of(const Eigen::Ref<const Vec>& x) const;

  Points sites_;
  Vec weights_;
  SingleSiteSpec spec_;
  std::unordered_map<Key, std::vector<Index>, KeyHash> buckets_;
};

double eval_total(const PointConfig& config, const SingleSiteSpec& spec,
                  const Eigen::Ref<const Vec>& x);

/// V = V1 + V2 where V1 carries one site per cell of the 2 ell sublattice.
struct SplitSelection {
  PointConfig config;
  SingleSiteSpec spec;
  double ell = 1.0;
  CellGrid cells;
  /// flat cell index of a sublattice cell -> chosen point index
  std::map<std::int64_t, Index> selected;
  std::vector<Index> remainder;
  PotentialField v1;
  PotentialField v2;
};

/// Cells whose index differs from n/2 by an even number on every axis.
bool is_sublattice_cell(const CellGrid& grid, const CellIndex& idx);

/// Picks, in every sublattice cell, the eligible point (eps != 0) nearest
/// the cell center; ties go to the earlier point in canonical order.
/// Throws when a sublattice cell is empty or when the supports of the chosen
/// bumps could overlap (2 ell - ell sqrt(d) <= 2 r).
SplitSelection split_potential(const PointConfig& config, double ell, const SingleSiteSpec& spec);

/// The same selection with the remainder reweighted by `remainder_weights`
/// (t values, indexed like `sel.remainder`).
SplitSelection reweight_remainder(const SplitSelection& sel, const std::vector<double>& remainder_weights);

struct TranslationAverageOptions {
  /// Target quadrature step; 0 selects min(r / 64, ell / 16).
  double step = 0.0;
};

struct TranslationAverage {
  Points probes;
  Vec field;
  /// Infimum over probes farther than K from the boundary.
  double interior_infimum = 0.0;
  Index interior_count = 0;
  double step = 0.0;
};

/// A(x) = integral over a in [-K, K]^d of V1(x - a), midpoint tensor rule,
/// evaluated at the cell centers of `probe_grid`.
TranslationAverage translation_average(const SplitSelection& sel, double K, const CellGrid& probe_grid,
                                       TranslationAverageOptions options = {});

/// Same quadrature for a single point x.
double translation_average_at(const PotentialField& v1, const Eigen::Ref<const Vec>& x, double K,
                              double step);

}  // namespace poisloc
