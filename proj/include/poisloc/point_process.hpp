#pragma once

#include <Eigen/Dense>

#include "json.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace poisloc {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
/// Point sets are stored column-wise: dim x count.
using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;

/// Axis-aligned cube of side `side` centered at `center`. Membership is
/// half-open per axis: [lower, lower + side).
struct Box {
  int dim = 1;
  Vec center = Vec::Zero(1);
  double side = 1.0;

  Box() = default;
  Box(int dim, Vec center, double side);
  /// Cube centered at the origin.
  static Box centered(int dim, double side);

  Vec lower() const { return center.array() - 0.5 * side; }
  Vec upper() const { return center.array() + 0.5 * side; }
  double volume() const;
  bool contains(const Eigen::Ref<const Vec>& x) const;

  friend bool operator==(const Box& a, const Box& b) {
    return a.dim == b.dim && a.side == b.side && a.center.size() == b.center.size() &&
           a.center == b.center;
  }
};

/// A finite configuration in a box. Points are kept in lexicographic
/// coordinate order; optional per-point arrays follow that order.
struct PointConfig {
  Box box;
  Points points;
  double density = 1.0;
  std::uint64_t seed = 0;
  std::optional<std::vector<std::uint8_t>> marks;
  std::optional<std::vector<double>> attenuations;
  std::optional<std::vector<bool>> free_flags;

  Index size() const { return points.cols(); }
  /// Weight of point i in the potential: t_i * eps_i (each defaulting to 1).
  double weight(Index i) const;
  bool is_free(Index i) const { return free_flags && (*free_flags)[static_cast<std::size_t>(i)]; }

  /// Restores canonical order, permuting every per-point array alongside.
  void canonicalize();
  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;

  friend bool operator==(const PointConfig& a, const PointConfig& b);
};

/// The eps = 1 points of a marked configuration, marks dropped.
PointConfig marked_subset(const PointConfig& config);

struct SamplerLimits {
  double max_expected = 1e7;
};

PointConfig sample_poisson(const Box& box, double density, std::uint64_t seed,
                           SamplerLimits limits = {});
/// Poisson(2 * density) points with independent fair Bernoulli marks; the
/// configuration records `density`, the intensity of the eps = 1 subset.
PointConfig sample_thinned(const Box& box, double density, std::uint64_t seed,
                           SamplerLimits limits = {});

/// Number of points of `config` inside `region` (half-open).
Index count(const PointConfig& config, const Box& region);

using CellIndex = std::vector<std::int64_t>;

/// Regular partition of a box into half-open cubic cells.
struct CellGrid {
  Box box;
  double cell_side = 1.0;
  std::vector<std::int64_t> cells_per_axis;

  /// floor(L / ell) cells per axis of side L / floor(L / ell).
  static CellGrid fit_floor(const Box& box, double ell);
  /// ceil(L / delta) cells per axis; cell side never exceeds delta.
  static CellGrid fit_ceil(const Box& box, double delta);

  std::int64_t cell_count() const;
  CellIndex cell_of(const Eigen::Ref<const Vec>& x) const;
  std::int64_t flatten(const CellIndex& idx) const;
  CellIndex unflatten(std::int64_t flat) const;
  Vec cell_center(const CellIndex& idx) const;
  Box cell_box(const CellIndex& idx) const;
};

/// Occupied cells only: flat cell index -> number of points.
using Occupancy = std::map<std::int64_t, std::int64_t>;

Occupancy occupancy(const PointConfig& config, const CellGrid& grid);

struct SnapResult {
  PointConfig snapped;
  CellGrid grid;
  Occupancy occupancy;
  bool admissible = true;
};

/// Moves every point to the center of its delta-cell. Admissible iff no
/// cell holds more than one point.
SnapResult snap(const PointConfig& config, double delta);

/// True iff the two configurations have identical delta-cell occupancy.
bool same_class(const PointConfig& a, const PointConfig& b, double delta);

struct CellEventResult {
  bool holds = true;
  CellGrid grid;
  std::vector<std::int64_t> counts;  // per flat cell index
  std::optional<std::int64_t> failing_cell;
  double upper_bound = 0.0;
};

/// Checks 1 <= N(cell) <= upper_factor * density * ell^d on the ell-grid.
CellEventResult cell_event_check(const PointConfig& config, double ell, double upper_factor);

/// 1 - (cells) * (P{N = 0} + P{N > upper}) for the ell-grid of a box of
/// side L under Poisson(density): a union lower bound on P(cell event).
double cell_event_union_bound(int dim, double side, double density, double ell,
                              double upper_factor);

void to_json(nlohmann::json& j, const Box& box);
void from_json(const nlohmann::json& j, Box& box);
void to_json(nlohmann::json& j, const PointConfig& config);
void from_json(const nlohmann::json& j, PointConfig& config);

}  // namespace poisloc
