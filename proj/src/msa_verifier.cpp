#include "poisloc/msa_verifier.hpp"

#include "poisloc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace poisloc {

ScaleParams derive_scales(double density, double L0, int dim, double slack, double p) {
  if (!(density > 0.0)) throw std::invalid_argument("derive_scales: density must be positive");
  if (dim < 1 || dim > 3) throw std::invalid_argument("derive_scales: dimension must be 1, 2 or 3");
  if (!(L0 > std::numbers::e)) throw std::invalid_argument("derive_scales: L0 must exceed e");
  ScaleParams s;
  s.dim = dim;
  s.density = density;
  s.L0 = L0;
  s.slack = slack;
  s.p = p;
  s.ell = std::pow(std::log(L0) / density, 1.0 / dim);
  if (s.ell >= L0 / 4.0) {
    std::ostringstream msg;
    msg << "derive_scales: cell scale " << s.ell << " does not fit, need ell < L0/4 = " << L0 / 4.0;
    throw std::invalid_argument(msg.str());
  }
  s.K = 10.0 * s.ell;
  s.E0 = std::pow(s.ell, -(4.0 * (dim + 1) + dim * slack));
  return s;
}

std::vector<std::pair<Vec, Vec>> separated_pairs(const Box& box, double min_distance) {
  const Points centers = unit_lattice(box);
  std::vector<std::pair<Vec, Vec>> pairs;
  for (Index x = 0; x < centers.cols(); ++x)
    for (Index y = 0; y < centers.cols(); ++y)
      if ((centers.col(x) - centers.col(y)).norm() >= min_distance) pairs.emplace_back(centers.col(x), centers.col(y));
  return pairs;
}

namespace {

struct OffDiagonal {
  double worst = 0.0;
  double rate = std::numeric_limits<double>::infinity();
};

OffDiagonal summarize(const std::vector<PairNorm>& pairs, double L) {
  OffDiagonal o;
  for (const auto& p : pairs) {
    o.worst = std::max(o.worst, p.norm);
    o.rate = std::min(o.rate, -std::log(p.norm) / L);
  }
  return o;
}

}  // namespace

GoodBoxReport good_box_check(const DiscreteHamiltonian& H, double energy, double L, double c, double slack,
                             EigenOptions options) {
  GoodBoxReport r;
  r.energy = energy;
  r.L = L;
  r.c = c;
  r.slack = slack;
  r.norm_bound = std::exp(std::pow(L, 1.0 - slack));
  r.offdiag_bound = std::exp(-c * L);
  try {
    const auto probe = resolvent_probe(H, energy, separated_pairs(H.grid().box, L / 10.0), options);
    r.spectral_distance = probe.spectral_distance;
    r.resolvent_norm = probe.norm;
    r.pairs = probe.pairs;
  } catch (const ResonanceError& e) {
    r.resonance = true;
    r.spectral_distance = e.distance();
    return r;
  }
  const auto od = summarize(r.pairs, L);
  r.worst_offdiag = od.worst;
  r.effective_rate = od.rate;
  r.norm_ok = r.resolvent_norm <= r.norm_bound;
  r.offdiag_ok = r.worst_offdiag <= r.offdiag_bound;
  r.verdict = r.norm_ok && r.offdiag_ok;
  return r;
}

double calibrate_decay_constant(std::span<const GoodBoxReport> reports, double quantile, double safety) {
  std::vector<double> rates;
  for (const auto& r : reports)
    if (!r.resonance && std::isfinite(r.effective_rate)) rates.push_back(r.effective_rate);
  if (rates.empty()) throw std::invalid_argument("calibrate_decay_constant: no usable reports");
  if (!(quantile >= 0.0 && quantile <= 1.0)) throw std::invalid_argument("calibrate_decay_constant: bad quantile");
  std::sort(rates.begin(), rates.end());
  const auto k = static_cast<std::size_t>(std::floor(quantile * static_cast<double>(rates.size() - 1)));
  return safety * rates[k];
}

InitialScaleReport initial_scale_check(const PointConfig& config, const ScaleParams& params, const SingleSiteSpec& spec,
                                       const Grid& grid, double energy, InitialScaleConstants constants) {
  if (!(energy >= 0.0 && energy <= params.E0))
    throw std::invalid_argument("initial_scale_check: energy must lie in [0, E0]");
  InitialScaleReport rep;
  rep.params = params;
  rep.energy = energy;
  rep.cell_event = cell_event_check(config, params.ell, constants.upper_factor);
  if (!rep.cell_event.holds) return rep;

  std::optional<SplitSelection> sel;
  try {
    sel.emplace(split_potential(config, params.ell, spec));
    rep.split_ok = true;
  } catch (const std::exception& e) {
    rep.split_error = e.what();
    return rep;
  }

  const auto average = translation_average(*sel, params.K, CellGrid::fit_floor(config.box, params.ell));
  rep.average_constant = average.interior_infimum;
  const GammaOperator gamma = build_gamma(grid, *sel, energy);
  rep.gamma = gamma_diagnostics(gamma, *sel, params.E0,
                                {constants.shift_step, rep.average_constant, params.K});

  const auto pairs = separated_pairs(config.box, params.L0 / 10.0);
  const double norm_limit = constants.norm_factor / params.E0;
  const double offdiag_limit = std::exp(-constants.c * params.L0);
  auto measure = [&](const Vec& potential, double& norm, double& worst, double* rate) {
    try {
      const auto probe = resolvent_probe(assemble(grid, potential), energy, pairs);
      norm = probe.norm;
      const auto od = summarize(probe.pairs, params.L0);
      worst = od.worst;
      if (rate) *rate = od.rate;
    } catch (const ResonanceError&) {
      norm = std::numeric_limits<double>::infinity();
      worst = std::numeric_limits<double>::infinity();
      if (rate) *rate = 0.0;
    }
    return norm <= norm_limit && worst <= offdiag_limit;
  };

  const Vec v = gamma.v1 + gamma.v2;
  const bool base_ok = measure(v, rep.resolvent_norm, rep.worst_offdiag, &rep.effective_rate);
  rep.norm_ratio = rep.resolvent_norm * params.E0;
  rep.norm_ok = rep.resolvent_norm <= norm_limit;
  rep.offdiag_ok = rep.worst_offdiag <= offdiag_limit;

  CounterRng rng(derive_seed(constants.attenuation_seed, 0, Stream::Attenuation));
  std::vector<double> t(sel->remainder.size());
  for (auto& ti : t) ti = rng.uniform();
  const SplitSelection attenuated = reweight_remainder(*sel, t);
  const Vec v_att = gamma.v1 + sample_field(grid, attenuated.v2);
  rep.robust_ok = measure(v_att, rep.robust_resolvent_norm, rep.robust_worst_offdiag, nullptr);
  rep.passes = base_ok && rep.robust_ok;
  return rep;
}

HamiltonianBuilder free_site_builder(const PointConfig& config, const SingleSiteSpec& spec, const Grid& grid) {
  std::vector<Index> free;
  for (Index i = 0; i < config.size(); ++i)
    if (config.is_free(i)) free.push_back(i);
  Vec base_weights(config.size());
  for (Index i = 0; i < config.size(); ++i) base_weights(i) = config.is_free(i) ? 0.0 : config.weight(i);
  const Vec fixed = sample_field(grid, PotentialField(config.points, base_weights, spec));
  // One column per free site: its bump sampled on the grid.
  std::vector<Vec> bumps;
  for (Index i : free) {
    Points site = config.points.col(i);
    double eps = 1.0;
    if (config.marks) eps = (*config.marks)[static_cast<std::size_t>(i)];
    bumps.push_back(eps * sample_field(grid, PotentialField(site, Vec::Ones(1), spec)));
  }
  return [grid, fixed, bumps](const std::vector<double>& t) {
    if (t.size() != bumps.size()) throw std::invalid_argument("free_site_builder: assignment size mismatch");
    Vec v = fixed;
    for (std::size_t k = 0; k < bumps.size(); ++k) v += t[k] * bumps[k];
    return assemble(grid, v);
  };
}

TuneResult free_site_tune(const HamiltonianBuilder& build, Index free_sites, double energy, double L, double c,
                          double slack, EigenOptions options) {
  if (free_sites > kFreeSiteCap) {
    std::ostringstream msg;
    msg << "free_site_tune: " << free_sites << " free sites exceed the exhaustive cap of " << kFreeSiteCap
        << "; reduce the box scale";
    throw std::invalid_argument(msg.str());
  }
  TuneResult out;
  const std::uint64_t total = std::uint64_t{1} << free_sites;
  std::vector<double> t(static_cast<std::size_t>(free_sites));
  for (std::uint64_t k = 0; k < total; ++k) {
    for (Index i = 0; i < free_sites; ++i) t[static_cast<std::size_t>(i)] = static_cast<double>((k >> i) & 1u);
    const bool verdict = good_box_check(build(t), energy, L, c, slack, options).verdict;
    ++out.tried;
    out.verdicts.push_back(verdict);
    if (verdict) {
      out.assignment = t;
      break;
    }
  }
  return out;
}

double good_probability_reference(double L, int dim, double slack) {
  return 1.0 - std::pow(L, -(3.0 / 8.0) * dim + slack);
}

ProbabilityEstimate make_estimate(Index successes, Index samples, double L, int dim, double slack) {
  ProbabilityEstimate e;
  e.samples = samples;
  e.successes = successes;
  e.estimate = samples > 0 ? static_cast<double>(successes) / static_cast<double>(samples) : 0.0;
  e.interval = wilson_interval(successes, samples);
  e.reference = good_probability_reference(L, dim, slack);
  return e;
}

std::uint64_t realization_seed(std::uint64_t master, Index realization) {
  return derive_seed(master, static_cast<std::uint64_t>(realization), Stream::Realization);
}

RealizationRecord good_box_realization(const MonteCarloSpec& spec, Index realization) {
  const Box box = Box::centered(spec.dim, spec.L);
  const Grid grid = build_grid(box, spec.spacing);
  RealizationRecord rec;
  rec.index = realization;
  rec.seed = realization_seed(spec.master_seed, realization);
  const PointConfig config = sample_poisson(box, spec.density, rec.seed);
  const auto H = assemble_field(grid, PotentialField(config, spec.spec));
  const auto report = good_box_check(H, spec.energy, spec.L, spec.c, spec.slack, spec.eigen);
  rec.verdict = report.verdict;
  rec.resonance = report.resonance;
  rec.resolvent_norm = report.resolvent_norm;
  rec.worst_offdiag = report.worst_offdiag;
  rec.effective_rate = report.effective_rate;
  return rec;
}

MonteCarloResult mc_good_probability(const MonteCarloSpec& spec) {
  if (spec.samples < 100) throw std::invalid_argument("mc_good_probability: at least 100 samples required");
  MonteCarloResult out;
  out.records = parallel_map<RealizationRecord>(spec.samples, spec.workers,
                                                [&](Index i) { return good_box_realization(spec, i); });
  Index successes = 0;
  for (const auto& r : out.records) successes += r.verdict ? 1 : 0;
  out.estimate = make_estimate(successes, spec.samples, spec.L, spec.dim, spec.slack);
  return out;
}

std::vector<StabilityRow> eigenvalue_stability(const PointConfig& config, const std::vector<double>& deltas,
                                               Window window, Index perturbations, std::uint64_t seed,
                                               const SingleSiteSpec& spec, const Grid& grid, EigenOptions options) {
  std::vector<StabilityRow> rows;
  const double grad = single_site_gradient_bound(spec);
  const int d = config.box.dim;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    const double delta = deltas[k];
    if (delta < 0.0) throw std::invalid_argument("eigenvalue_stability: delta must be non-negative");
    StabilityRow row;
    row.delta = delta;
    row.first_order_bound = static_cast<double>(config.size()) * grad * delta * std::sqrt(double(d)) / 2.0;
    if (delta == 0.0) {
      row.shifts.assign(static_cast<std::size_t>(perturbations), 0.0);
      rows.push_back(std::move(row));
      continue;
    }
    const SnapResult snapped = snap(config, delta);
    row.admissible = snapped.admissible;
    const PointConfig& base = snapped.snapped;
    const Vec v_base = sample_field(grid, PotentialField(base, spec));
    const auto base_window = eigen_window(assemble(grid, v_base), window, options);
    const Vec& lambda0 = base_window.eigenvalues;
    CounterRng rng(derive_seed(seed, k, Stream::Perturbation));
    for (Index n = 0; n < perturbations; ++n) {
      PointConfig moved = base;
      for (Index i = 0; i < moved.size(); ++i) {
        const Box cell = snapped.grid.cell_box(snapped.grid.cell_of(base.points.col(i)));
        const Vec lo = cell.lower();
        for (int a = 0; a < d; ++a) moved.points(a, i) = lo(a) + rng.uniform() * cell.side;
      }
      const Vec v = sample_field(grid, PotentialField(moved, spec));
      const double eta = (v - v_base).cwiseAbs().maxCoeff();
      const auto result = eigen_window(assemble(grid, v), window, options);
      const Vec& lambda = result.eigenvalues;
      double shift = 0.0;
      const Index common = std::min(lambda.size(), lambda0.size());
      for (Index j = 0; j < common; ++j) shift = std::max(shift, std::abs(lambda(j) - lambda0(j)));
      if (lambda.size() != lambda0.size()) {
        row.crossing = true;
        const Vec& extra = lambda.size() > lambda0.size() ? lambda : lambda0;
        for (Index j = common; j < extra.size(); ++j)
          shift = std::max(shift, std::min(extra(j) - window.lo, window.hi - extra(j)));
      }
      row.shifts.push_back(shift);
      row.max_shift = std::max(row.max_shift, shift);
      row.max_potential_change = std::max(row.max_potential_change, eta);
      if (!row.crossing && shift > eta * (1.0 + 1e-9) + 1e-12) row.weyl_ok = false;
      if (shift > row.first_order_bound) row.bound_ok = false;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace poisloc
