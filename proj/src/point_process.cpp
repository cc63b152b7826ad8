#include "poisloc/point_process.hpp"

#include "poisloc/rng.hpp"
#include "poisloc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace poisloc {

Box::Box(int dim_, Vec center_, double side_) : dim(dim_), center(std::move(center_)), side(side_) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("Box: dimension must be 1, 2 or 3");
  if (!(side > 0.0) || !std::isfinite(side)) throw std::invalid_argument("Box: side must be > 0");
  if (center.size() != dim) throw std::invalid_argument("Box: center has wrong dimension");
}

Box Box::centered(int dim, double side) { return Box(dim, Vec::Zero(dim), side); }

double Box::volume() const { return std::pow(side, dim); }

bool Box::contains(const Eigen::Ref<const Vec>& x) const {
  for (int a = 0; a < dim; ++a) {
    const double lo = center(a) - 0.5 * side;
    if (x(a) < lo || x(a) >= lo + side) return false;
  }
  return true;
}

double PointConfig::weight(Index i) const {
  const auto k = static_cast<std::size_t>(i);
  double w = 1.0;
  if (attenuations) w *= (*attenuations)[k];
  if (marks) w *= static_cast<double>((*marks)[k]);
  return w;
}

namespace {

template <class T>
void permute(std::optional<std::vector<T>>& v, const std::vector<Index>& order) {
  if (!v) return;
  std::vector<T> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back((*v)[static_cast<std::size_t>(i)]);
  *v = std::move(out);
}

}  // namespace

void PointConfig::canonicalize() {
  std::vector<Index> order(static_cast<std::size_t>(points.cols()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [this](Index a, Index b) {
    for (Index r = 0; r < points.rows(); ++r) {
      if (points(r, a) < points(r, b)) return true;
      if (points(r, a) > points(r, b)) return false;
    }
    return false;
  });
  Points sorted(points.rows(), points.cols());
  for (std::size_t k = 0; k < order.size(); ++k)
    sorted.col(static_cast<Index>(k)) = points.col(order[k]);
  points = std::move(sorted);
  permute(marks, order);
  permute(attenuations, order);
  permute(free_flags, order);
}

void PointConfig::validate() const {
  if (points.rows() != box.dim && points.cols() > 0)
    throw std::invalid_argument("PointConfig: point dimension does not match box");
  if (!(density > 0.0)) throw std::invalid_argument("PointConfig: density must be > 0");
  const auto n = static_cast<std::size_t>(size());
  for (Index i = 0; i < size(); ++i)
    if (!box.contains(points.col(i))) {
      std::ostringstream msg;
      msg << "PointConfig: point " << i << " lies outside the box";
      throw std::invalid_argument(msg.str());
    }
  if (marks) {
    if (marks->size() != n) throw std::invalid_argument("PointConfig: marks size mismatch");
    for (auto m : *marks)
      if (m > 1) throw std::invalid_argument("PointConfig: marks must be 0 or 1");
  }
  if (attenuations) {
    if (attenuations->size() != n)
      throw std::invalid_argument("PointConfig: attenuations size mismatch");
    for (double t : *attenuations)
      if (!(t >= 0.0 && t <= 1.0))
        throw std::invalid_argument("PointConfig: attenuations must lie in [0, 1]");
  }
  if (free_flags && free_flags->size() != n)
    throw std::invalid_argument("PointConfig: free_flags size mismatch");
}

bool operator==(const PointConfig& a, const PointConfig& b) {
  return a.box == b.box && a.points.rows() == b.points.rows() &&
         a.points.cols() == b.points.cols() && a.points == b.points && a.density == b.density &&
         a.seed == b.seed && a.marks == b.marks && a.attenuations == b.attenuations &&
         a.free_flags == b.free_flags;
}

PointConfig marked_subset(const PointConfig& config) {
  PointConfig out;
  out.box = config.box;
  out.density = config.density;
  out.seed = config.seed;
  std::vector<Index> keep;
  for (Index i = 0; i < config.size(); ++i)
    if (!config.marks || (*config.marks)[static_cast<std::size_t>(i)] == 1) keep.push_back(i);
  out.points.resize(config.box.dim, static_cast<Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k)
    out.points.col(static_cast<Index>(k)) = config.points.col(keep[k]);
  if (config.attenuations) {
    out.attenuations.emplace();
    for (auto i : keep) out.attenuations->push_back((*config.attenuations)[static_cast<std::size_t>(i)]);
  }
  if (config.free_flags) {
    out.free_flags.emplace();
    for (auto i : keep) out.free_flags->push_back((*config.free_flags)[static_cast<std::size_t>(i)]);
  }
  return out;
}

namespace {

PointConfig sample_uniform(const Box& box, double intensity, std::uint64_t seed,
                           SamplerLimits limits) {
  if (!(intensity > 0.0) || !std::isfinite(intensity))
    throw std::invalid_argument("sample_poisson: density must be > 0");
  const double mean = intensity * box.volume();
  if (mean > limits.max_expected) {
    std::ostringstream msg;
    msg << "sample_poisson: expected point count " << mean << " exceeds the cap "
        << limits.max_expected;
    throw std::length_error(msg.str());
  }
  CounterRng count_rng(seed, Stream::Count);
  std::poisson_distribution<std::int64_t> law(mean);
  const std::int64_t n = law(count_rng);

  CounterRng pos_rng(seed, Stream::Position);
  PointConfig c;
  c.box = box;
  c.seed = seed;
  c.points.resize(box.dim, static_cast<Index>(n));
  const Vec lo = box.lower();
  for (Index i = 0; i < static_cast<Index>(n); ++i)
    for (int a = 0; a < box.dim; ++a) {
      double x = lo(a) + box.side * pos_rng.uniform();
      const double hi = lo(a) + box.side;
      if (x >= hi) x = std::nextafter(hi, lo(a));
      c.points(a, i) = x;
    }
  return c;
}

}  // namespace

PointConfig sample_poisson(const Box& box, double density, std::uint64_t seed,
                           SamplerLimits limits) {
  PointConfig c = sample_uniform(box, density, seed, limits);
  c.density = density;
  c.canonicalize();
  return c;
}

PointConfig sample_thinned(const Box& box, double density, std::uint64_t seed,
                           SamplerLimits limits) {
  PointConfig c = sample_uniform(box, 2.0 * density, seed, limits);
  c.density = density;
  CounterRng mark_rng(seed, Stream::Marks);
  std::vector<std::uint8_t> marks(static_cast<std::size_t>(c.size()));
  for (auto& m : marks) m = mark_rng.uniform() < 0.5 ? 1 : 0;
  c.marks = std::move(marks);
  c.canonicalize();
  return c;
}

Index count(const PointConfig& config, const Box& region) {
  Index n = 0;
  for (Index i = 0; i < config.size(); ++i)
    if (region.contains(config.points.col(i))) ++n;
  return n;
}

CellGrid CellGrid::fit_floor(const Box& box, double ell) {
  if (!(ell > 0.0) || ell > box.side * (1.0 + 1e-12))
    throw std::invalid_argument("CellGrid: cell side must lie in (0, L]");
  const auto n = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(box.side / ell + 1e-9)));
  return CellGrid{box, box.side / static_cast<double>(n),
                  std::vector<std::int64_t>(static_cast<std::size_t>(box.dim), n)};
}

CellGrid CellGrid::fit_ceil(const Box& box, double delta) {
  if (!(delta > 0.0) || delta > box.side * (1.0 + 1e-12))
    throw std::invalid_argument("CellGrid: cell side must lie in (0, L]");
  const auto n = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(box.side / delta - 1e-9)));
  if (std::pow(static_cast<double>(n), box.dim) > 4e18)
    throw std::length_error("CellGrid: too many cells");
  return CellGrid{box, box.side / static_cast<double>(n),
                  std::vector<std::int64_t>(static_cast<std::size_t>(box.dim), n)};
}

std::int64_t CellGrid::cell_count() const {
  std::int64_t c = 1;
  for (auto n : cells_per_axis) c *= n;
  return c;
}

CellIndex CellGrid::cell_of(const Eigen::Ref<const Vec>& x) const {
  CellIndex idx(cells_per_axis.size());
  const Vec lo = box.lower();
  for (std::size_t a = 0; a < idx.size(); ++a) {
    const auto i = static_cast<std::int64_t>(std::floor((x(static_cast<Index>(a)) - lo(static_cast<Index>(a))) / cell_side));
    idx[a] = std::clamp<std::int64_t>(i, 0, cells_per_axis[a] - 1);
  }
  return idx;
}

std::int64_t CellGrid::flatten(const CellIndex& idx) const {
  std::int64_t flat = 0;
  for (std::size_t a = 0; a < idx.size(); ++a) flat = flat * cells_per_axis[a] + idx[a];
  return flat;
}

CellIndex CellGrid::unflatten(std::int64_t flat) const {
  CellIndex idx(cells_per_axis.size());
  for (std::size_t a = idx.size(); a-- > 0;) {
    idx[a] = flat % cells_per_axis[a];
    flat /= cells_per_axis[a];
  }
  return idx;
}

Vec CellGrid::cell_center(const CellIndex& idx) const {
  Vec c = box.lower();
  for (std::size_t a = 0; a < idx.size(); ++a)
    c(static_cast<Index>(a)) += (static_cast<double>(idx[a]) + 0.5) * cell_side;
  return c;
}

Box CellGrid::cell_box(const CellIndex& idx) const { return Box(box.dim, cell_center(idx), cell_side); }

Occupancy occupancy(const PointConfig& config, const CellGrid& grid) {
  Occupancy occ;
  for (Index i = 0; i < config.size(); ++i) ++occ[grid.flatten(grid.cell_of(config.points.col(i)))];
  return occ;
}

SnapResult snap(const PointConfig& config, double delta) {
  SnapResult r{config, CellGrid::fit_ceil(config.box, delta), {}, true};
  for (Index i = 0; i < config.size(); ++i) {
    const CellIndex idx = r.grid.cell_of(config.points.col(i));
    r.snapped.points.col(i) = r.grid.cell_center(idx);
    if (++r.occupancy[r.grid.flatten(idx)] > 1) r.admissible = false;
  }
  r.snapped.canonicalize();
  return r;
}

bool same_class(const PointConfig& a, const PointConfig& b, double delta) {
  if (!(a.box == b.box)) throw std::invalid_argument("same_class: configurations live in different boxes");
  const CellGrid grid = CellGrid::fit_ceil(a.box, delta);
  return occupancy(a, grid) == occupancy(b, grid);
}

CellEventResult cell_event_check(const PointConfig& config, double ell, double upper_factor) {
  CellEventResult r;
  r.grid = CellGrid::fit_floor(config.box, ell);
  r.upper_bound = upper_factor * config.density * std::pow(ell, config.box.dim);
  r.counts.assign(static_cast<std::size_t>(r.grid.cell_count()), 0);
  for (Index i = 0; i < config.size(); ++i)
    ++r.counts[static_cast<std::size_t>(r.grid.flatten(r.grid.cell_of(config.points.col(i))))];
  for (std::size_t k = 0; k < r.counts.size(); ++k) {
    const auto c = r.counts[k];
    if (c < 1 || static_cast<double>(c) > r.upper_bound) {
      r.holds = false;
      r.failing_cell = static_cast<std::int64_t>(k);
      break;
    }
  }
  return r;
}

double cell_event_union_bound(int dim, double side, double density, double ell,
                              double upper_factor) {
  const CellGrid grid = CellGrid::fit_floor(Box::centered(dim, side), ell);
  const double mean = density * std::pow(grid.cell_side, dim);
  const double upper = upper_factor * density * std::pow(ell, dim);
  const auto kmax = static_cast<std::int64_t>(std::floor(upper));
  const double fail = poisson_pmf(0, mean) + (1.0 - poisson_cdf(kmax, mean));
  return 1.0 - static_cast<double>(grid.cell_count()) * fail;
}

void to_json(nlohmann::json& j, const Box& box) {
  j = nlohmann::json{{"dimension", box.dim},
                     {"center", std::vector<double>(box.center.data(), box.center.data() + box.dim)},
                     {"side", box.side}};
}

void from_json(const nlohmann::json& j, Box& box) {
  const auto center = j.at("center").get<std::vector<double>>();
  box = Box(j.at("dimension").get<int>(), Eigen::Map<const Vec>(center.data(), static_cast<Index>(center.size())),
            j.at("side").get<double>());
}

void to_json(nlohmann::json& j, const PointConfig& c) {
  to_json(j, c.box);
  j["density"] = c.density;
  j["seed"] = c.seed;
  auto pts = nlohmann::json::array();
  for (Index i = 0; i < c.size(); ++i)
    pts.push_back(std::vector<double>(c.points.col(i).data(), c.points.col(i).data() + c.points.rows()));
  j["points"] = std::move(pts);
  if (c.marks) j["marks"] = *c.marks;
  if (c.attenuations) j["attenuations"] = *c.attenuations;
  if (c.free_flags) j["free_flags"] = *c.free_flags;
}

void from_json(const nlohmann::json& j, PointConfig& c) {
  from_json(j, c.box);
  c.density = j.at("density").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& pts = j.at("points");
  c.points.resize(c.box.dim, static_cast<Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto p = pts[i].get<std::vector<double>>();
    if (static_cast<int>(p.size()) != c.box.dim)
      throw std::invalid_argument("PointConfig JSON: point has wrong dimension");
    for (int a = 0; a < c.box.dim; ++a) c.points(a, static_cast<Index>(i)) = p[static_cast<std::size_t>(a)];
  }
  c.marks.reset();
  c.attenuations.reset();
  c.free_flags.reset();
  if (j.contains("marks")) c.marks = j["marks"].get<std::vector<std::uint8_t>>();
  if (j.contains("attenuations")) c.attenuations = j["attenuations"].get<std::vector<double>>();
  if (j.contains("free_flags")) c.free_flags = j["free_flags"].get<std::vector<bool>>();
  c.validate();
}

}  // namespace poisloc
