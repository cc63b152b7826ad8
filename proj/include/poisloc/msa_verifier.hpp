#pragma once

#include "poisloc/loc_metrics.hpp"
#include "poisloc/point_process.hpp"
#include "poisloc/potential_field.hpp"
#include "poisloc/spectral_engine.hpp"
#include "poisloc/stats.hpp"

#include <functional>
#include <optional>

namespace poisloc {

inline constexpr double kDefaultSlack = 0.1;

/// Initial-scale geometry: ell = (log L0 / rho)^{1/d}, K = 10 ell and
/// E0 = ell^{-(4(d+1) + d slack)}.
struct ScaleParams {
  int dim = 1;
  double density = 1.0;
  double L0 = 0.0;
  double ell = 0.0;
  double E0 = 0.0;
  double K = 0.0;
  double p = 0.0;
  double slack = kDefaultSlack;
};

ScaleParams derive_scales(double density, double L0, int dim, double slack = kDefaultSlack, double p = 0.0);

/// Probe pairs (x, y) of unit-lattice cube centers with |x - y| >= min_distance.
std::vector<std::pair<Vec, Vec>> separated_pairs(const Box& box, double min_distance);

struct GoodBoxReport {
  double energy = 0.0;
  double L = 0.0;
  double c = 0.0;
  double slack = kDefaultSlack;
  double spectral_distance = 0.0;
  double resolvent_norm = std::numeric_limits<double>::infinity();
  double norm_bound = 0.0;     // e^{L^{1 - slack}}
  double offdiag_bound = 0.0;  // e^{-c L}
  std::vector<PairNorm> pairs;
  double worst_offdiag = 0.0;
  /// min over pairs of -log ||chi_x R chi_y|| / L: the largest c this box passes.
  double effective_rate = std::numeric_limits<double>::infinity();
  bool norm_ok = false;
  bool offdiag_ok = false;
  bool resonance = false;
  bool verdict = false;
};

/// Both good-box conditions at energy E for a box of side L.
GoodBoxReport good_box_check(const DiscreteHamiltonian& H, double energy, double L, double c,
                             double slack = kDefaultSlack, EigenOptions options = {});

/// c = safety * quantile of the per-report effective rates.
double calibrate_decay_constant(std::span<const GoodBoxReport> reports, double quantile = 0.5, double safety = 0.5);

struct InitialScaleConstants {
  double norm_factor = 1.0;  // A in ||R|| <= A / E0
  double c = 0.1;            // off-diagonal rate in e^{-c L0}
  double upper_factor = 10.0;
  std::uint64_t attenuation_seed = 1;
  double shift_step = 0.0;   // forwarded to gamma_diagnostics
};

struct InitialScaleReport {
  ScaleParams params;
  double energy = 0.0;
  CellEventResult cell_event;
  bool split_ok = false;
  std::string split_error;
  std::optional<GammaReport> gamma;
  double average_constant = 0.0;  // infimum of the translation-averaged field
  double resolvent_norm = 0.0;
  double norm_ratio = 0.0;        // ||R|| E0
  double worst_offdiag = 0.0;
  double effective_rate = 0.0;
  bool norm_ok = false;
  bool offdiag_ok = false;
  /// Same measurements with V2 sites attenuated by random t in [0, 1].
  double robust_resolvent_norm = 0.0;
  double robust_worst_offdiag = 0.0;
  bool robust_ok = false;
  bool passes = false;
};

/// The initial-scale chain on one configuration: cell event, potential
/// split, Gamma diagnostics, resolvent bounds, and the attenuated rerun.
InitialScaleReport initial_scale_check(const PointConfig& config, const ScaleParams& params, const SingleSiteSpec& spec,
                                       const Grid& grid, double energy, InitialScaleConstants constants = {});

/// Builds H for an assignment t of the free sites (in canonical order).
using HamiltonianBuilder = std::function<DiscreteHamiltonian(const std::vector<double>&)>;

/// Free sites of `config` take the assigned t; other sites keep their weight.
HamiltonianBuilder free_site_builder(const PointConfig& config, const SingleSiteSpec& spec, const Grid& grid);

inline constexpr Index kFreeSiteCap = 20;

struct TuneResult {
  std::optional<std::vector<double>> assignment;
  Index tried = 0;
  std::vector<bool> verdicts;  // per tried assignment, enumeration order
};

/// Enumerates t in {0,1}^n, assignment k setting t_i to bit i of k, and
/// returns the first whose operator passes good_box_check.
TuneResult free_site_tune(const HamiltonianBuilder& build, Index free_sites, double energy, double L, double c,
                          double slack = kDefaultSlack, EigenOptions options = {});

struct ProbabilityEstimate {
  Index samples = 0;
  Index successes = 0;
  double estimate = 0.0;
  Interval interval;
  double reference = 0.0;  // 1 - L^{-(3/8) d + slack}
};

double good_probability_reference(double L, int dim, double slack = kDefaultSlack);
ProbabilityEstimate make_estimate(Index successes, Index samples, double L, int dim, double slack = kDefaultSlack);

struct MonteCarloSpec {
  int dim = 1;
  double density = 1.0;
  double L = 20.0;
  double spacing = 0.1;
  double energy = 0.0;
  Index samples = 100;
  std::uint64_t master_seed = 1;
  double c = 0.1;
  double slack = kDefaultSlack;
  SingleSiteSpec spec;
  unsigned workers = 1;
  EigenOptions eigen;
};

struct RealizationRecord {
  Index index = 0;
  std::uint64_t seed = 0;
  bool verdict = false;
  bool resonance = false;
  double resolvent_norm = 0.0;
  double worst_offdiag = 0.0;
  double effective_rate = 0.0;
};

struct MonteCarloResult {
  ProbabilityEstimate estimate;
  std::vector<RealizationRecord> records;  // by realization index
};

/// Seed of realization i under a master seed.
std::uint64_t realization_seed(std::uint64_t master, Index realization);

/// Runs `task(i)` for i in [0, n) on `workers` threads; results land by index.
template <class Result, class Task>
std::vector<Result> parallel_map(Index n, unsigned workers, const Task& task);

/// One realization of the Monte Carlo: sample, assemble, good_box_check.
RealizationRecord good_box_realization(const MonteCarloSpec& spec, Index realization);

MonteCarloResult mc_good_probability(const MonteCarloSpec& spec);

struct StabilityRow {
  double delta = 0.0;
  double max_shift = 0.0;
  double max_potential_change = 0.0;  // sup over nodes of |V - V'|
  double first_order_bound = 0.0;     // N sup|grad u| delta sqrt(d) / 2
  bool weyl_ok = true;                // every shift <= its own |V - V'|_inf
  bool bound_ok = true;
  bool crossing = false;
  bool admissible = true;             // snapped base had at most one point per cell
  std::vector<double> shifts;
};

/// For each delta: snaps the configuration to its delta-cell centers, then
/// moves every point uniformly inside its cell `perturbations` times and
/// records the largest window-eigenvalue shift (sorted-order matching).
std::vector<StabilityRow> eigenvalue_stability(const PointConfig& config, const std::vector<double>& deltas,
                                               Window window, Index perturbations, std::uint64_t seed,
                                               const SingleSiteSpec& spec, const Grid& grid,
                                               EigenOptions options = {});

}  // namespace poisloc

#include "poisloc/detail/parallel.hpp"
