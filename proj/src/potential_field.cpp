#include "poisloc/potential_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace poisloc {

void SingleSiteSpec::validate() const {
  if (profile != "poly_bump") throw std::invalid_argument("SingleSiteSpec: unknown profile '" + profile + "'");
  if (!(radius > 0.0) || !std::isfinite(radius))
    throw std::invalid_argument("SingleSiteSpec: radius must be > 0");
}

double eval_single_site(const SingleSiteSpec& spec, const Eigen::Ref<const Vec>& x) {
  const double r2 = x.squaredNorm() / (spec.radius * spec.radius);
  if (r2 >= 1.0) return 0.0;
  const double t = 1.0 - r2;
  return t * t;
}

Vec single_site_gradient(const SingleSiteSpec& spec, const Eigen::Ref<const Vec>& x) {
  const double R2 = spec.radius * spec.radius;
  const double r2 = x.squaredNorm() / R2;
  if (r2 >= 1.0) return Vec::Zero(x.size());
  return (-4.0 * (1.0 - r2) / R2) * x;
}

double single_site_gradient_bound(const SingleSiteSpec& spec) {
  return 8.0 / (3.0 * std::sqrt(3.0) * spec.radius);
}

void to_json(nlohmann::json& j, const SingleSiteSpec& spec) {
  j = nlohmann::json{{"profile", spec.profile}, {"radius", spec.radius}};
}

void from_json(const nlohmann::json& j, SingleSiteSpec& spec) {
  spec.profile = j.at("profile").get<std::string>();
  spec.radius = j.at("radius").get<double>();
  spec.validate();
}

std::size_t PotentialField::KeyHash::operator()(const Key& k) const noexcept {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto v : k) {
    h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return static_cast<std::size_t>(h);
}

PotentialField::Key PotentialField::bucket_of(const Eigen::Ref<const Vec>& x) const {
  Key k{0, 0, 0};
  for (Index a = 0; a < x.size(); ++a)
    k[static_cast<std::size_t>(a)] = static_cast<std::int64_t>(std::floor(x(a) / spec_.radius));
  return k;
}

PotentialField::PotentialField(Points sites, Vec weights, SingleSiteSpec spec)
    : sites_(std::move(sites)), weights_(std::move(weights)), spec_(std::move(spec)) {
  spec_.validate();
  if (weights_.size() != sites_.cols()) throw std::invalid_argument("PotentialField: weight count mismatch");
  for (Index i = 0; i < sites_.cols(); ++i)
    if (weights_(i) != 0.0) buckets_[bucket_of(sites_.col(i))].push_back(i);
}

namespace {

Vec config_weights(const PointConfig& c) {
  Vec w(c.size());
  for (Index i = 0; i < c.size(); ++i) w(i) = c.weight(i);
  return w;
}

}  // namespace

PotentialField::PotentialField(const PointConfig& config, SingleSiteSpec spec)
    : PotentialField(config.points, config_weights(config), std::move(spec)) {}

double PotentialField::operator()(const Eigen::Ref<const Vec>& x) const {
  if (buckets_.empty()) return 0.0;
  const Key base = bucket_of(x);
  const int d = dim();
  double sum = 0.0;
  Key k = base;
  // 3^d neighbouring buckets cover every site within one radius.
  const int total = d == 1 ? 3 : (d == 2 ? 9 : 27);
  for (int code = 0; code < total; ++code) {
    int c = code;
    for (int a = 0; a < d; ++a) {
      k[static_cast<std::size_t>(a)] = base[static_cast<std::size_t>(a)] + (c % 3) - 1;
      c /= 3;
    }
    const auto it = buckets_.find(k);
    if (it == buckets_.end()) continue;
    for (auto i : it->second) sum += weights_(i) * eval_single_site(spec_, x - sites_.col(i));
  }
  return sum;
}

double eval_total(const PointConfig& config, const SingleSiteSpec& spec, const Eigen::Ref<const Vec>& x) {
  return PotentialField(config, spec)(x);
}

bool is_sublattice_cell(const CellGrid& grid, const CellIndex& idx) {
  for (std::size_t a = 0; a < idx.size(); ++a)
    if ((idx[a] - grid.cells_per_axis[a] / 2) % 2 != 0) return false;
  return true;
}

namespace {

PotentialField field_from(const PointConfig& c, const std::vector<Index>& ids, const std::vector<double>& w,
                          const SingleSiteSpec& spec) {
  Points sites(c.box.dim, static_cast<Index>(ids.size()));
  Vec weights(static_cast<Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    sites.col(static_cast<Index>(k)) = c.points.col(ids[k]);
    weights(static_cast<Index>(k)) = w[k];
  }
  return PotentialField(std::move(sites), std::move(weights), spec);
}

}  // namespace

SplitSelection split_potential(const PointConfig& config, double ell, const SingleSiteSpec& spec) {
  spec.validate();
  const CellGrid cells = CellGrid::fit_floor(config.box, ell);
  const double s = cells.cell_side;
  const int d = config.box.dim;
  if (!(2.0 * s - s * std::sqrt(static_cast<double>(d)) > 2.0 * spec.radius)) {
    std::ostringstream msg;
    msg << "split_potential: bumps on the 2ell sublattice may overlap (cell side " << s
        << ", radius " << spec.radius << ", d = " << d << ")";
    throw std::invalid_argument(msg.str());
  }

  std::map<std::int64_t, Index> best;
  std::map<std::int64_t, double> best_dist;
  for (Index i = 0; i < config.size(); ++i) {
    if (config.marks && (*config.marks)[static_cast<std::size_t>(i)] == 0) continue;
    const CellIndex idx = cells.cell_of(config.points.col(i));
    if (!is_sublattice_cell(cells, idx)) continue;
    const auto flat = cells.flatten(idx);
    const double dist = (config.points.col(i) - cells.cell_center(idx)).squaredNorm();
    const auto it = best_dist.find(flat);
    if (it == best_dist.end() || dist < it->second) {
      best[flat] = i;
      best_dist[flat] = dist;
    }
  }
  for (std::int64_t flat = 0; flat < cells.cell_count(); ++flat) {
    const CellIndex idx = cells.unflatten(flat);
    if (is_sublattice_cell(cells, idx) && !best.count(flat)) {
      std::ostringstream msg;
      msg << "split_potential: sublattice cell (";
      for (std::size_t a = 0; a < idx.size(); ++a) msg << (a ? "," : "") << idx[a];
      msg << ") holds no eligible point";
      throw std::runtime_error(msg.str());
    }
  }

  std::vector<bool> chosen(static_cast<std::size_t>(config.size()), false);
  std::vector<Index> sel_ids;
  std::vector<double> sel_w;
  for (const auto& [flat, i] : best) {
    chosen[static_cast<std::size_t>(i)] = true;
    sel_ids.push_back(i);
    sel_w.push_back(config.weight(i));
  }
  std::vector<Index> rem_ids;
  std::vector<double> rem_w;
  for (Index i = 0; i < config.size(); ++i)
    if (!chosen[static_cast<std::size_t>(i)]) {
      rem_ids.push_back(i);
      rem_w.push_back(config.weight(i));
    }
  PotentialField v1 = field_from(config, sel_ids, sel_w, spec);
  PotentialField v2 = field_from(config, rem_ids, rem_w, spec);
  return SplitSelection{config, spec, ell, cells, std::move(best), std::move(rem_ids), std::move(v1), std::move(v2)};
}

SplitSelection reweight_remainder(const SplitSelection& sel, const std::vector<double>& remainder_weights) {
  if (remainder_weights.size() != sel.remainder.size())
    throw std::invalid_argument("reweight_remainder: weight count mismatch");
  SplitSelection out = sel;
  if (!out.config.attenuations)
    out.config.attenuations = std::vector<double>(static_cast<std::size_t>(out.config.size()), 1.0);
  std::vector<double> w;
  for (std::size_t k = 0; k < sel.remainder.size(); ++k) {
    const double t = remainder_weights[k];
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("reweight_remainder: t must lie in [0, 1]");
    (*out.config.attenuations)[static_cast<std::size_t>(sel.remainder[k])] = t;
    w.push_back(out.config.weight(sel.remainder[k]));
  }
  out.v2 = field_from(out.config, sel.remainder, w, sel.spec);
  return out;
}

double translation_average_at(const PotentialField& v1, const Eigen::Ref<const Vec>& x, double K, double step) {
  const int d = v1.dim();
  const double r = v1.spec().radius;
  const auto M = static_cast<std::int64_t>(std::ceil(2.0 * K / step - 1e-9));
  const double q = 2.0 * K / static_cast<double>(M);
  const double cell_volume = std::pow(q, d);
  double total = 0.0;
  std::array<std::int64_t, 3> kmin{0, 0, 0}, kmax{0, 0, 0}, k{0, 0, 0};
  Vec a(d);
  for (Index s = 0; s < v1.sites().cols(); ++s) {
    const double w = v1.weights()(s);
    if (w == 0.0) continue;
    bool empty = false;
    for (int ax = 0; ax < d; ++ax) {
      const double shift = x(ax) - v1.sites()(ax, s) + K;
      kmin[static_cast<std::size_t>(ax)] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor((shift - r) / q - 0.5)));
      kmax[static_cast<std::size_t>(ax)] = std::min<std::int64_t>(M - 1, static_cast<std::int64_t>(std::ceil((shift + r) / q - 0.5)));
      if (kmin[static_cast<std::size_t>(ax)] > kmax[static_cast<std::size_t>(ax)]) empty = true;
    }
    if (empty) continue;
    double site_sum = 0.0;
    k = kmin;
    for (;;) {
      for (int ax = 0; ax < d; ++ax)
        a(ax) = -K + (static_cast<double>(k[static_cast<std::size_t>(ax)]) + 0.5) * q;
      site_sum += eval_single_site(v1.spec(), x - a - v1.sites().col(s));
      int ax = d - 1;
      while (ax >= 0 && ++k[static_cast<std::size_t>(ax)] > kmax[static_cast<std::size_t>(ax)]) {
        k[static_cast<std::size_t>(ax)] = kmin[static_cast<std::size_t>(ax)];
        --ax;
      }
      if (ax < 0) break;
    }
    total += w * site_sum * cell_volume;
  }
  return total;
}

TranslationAverage translation_average(const SplitSelection& sel, double K, const CellGrid& probe_grid,
                                       TranslationAverageOptions options) {
  if (K < 2.0 * sel.ell) throw std::invalid_argument("translation_average: K must be at least 2 ell");
  const double r = sel.spec.radius;
  const double step = options.step > 0.0 ? options.step : std::min(r / 64.0, sel.ell / 16.0);
  if (step > r / 4.0) {
    std::ostringstream msg;
    msg << "translation_average: quadrature step " << step << " is coarser than r/4 = " << r / 4.0;
    throw std::invalid_argument(msg.str());
  }
  TranslationAverage out;
  out.step = step;
  const auto n = probe_grid.cell_count();
  out.probes.resize(probe_grid.box.dim, n);
  out.field.resize(n);
  const Vec lo = sel.config.box.lower();
  const Vec hi = sel.config.box.upper();
  double inf = std::numeric_limits<double>::infinity();
  for (std::int64_t flat = 0; flat < n; ++flat) {
    const Vec x = probe_grid.cell_center(probe_grid.unflatten(flat));
    out.probes.col(flat) = x;
    out.field(flat) = translation_average_at(sel.v1, x, K, step);
    const bool interior = ((x - lo).array() > K).all() && ((hi - x).array() > K).all();
    if (interior) {
      ++out.interior_count;
      inf = std::min(inf, out.field(flat));
    }
  }
  out.interior_infimum = out.interior_count > 0 ? inf : 0.0;
  return out;
}

}  // namespace poisloc
