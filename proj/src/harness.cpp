#include "poisloc/harness.hpp"

#include "poisloc/rng.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace poisloc {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_params(const Params& p) {
  std::string s;
  for (const auto& [k, v] : p) {
    if (!s.empty()) s += ';';
    s += k + '=' + format_double(v);
  }
  return s;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& field, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || t.empty())
    throw SpecError(field, "'" + t + "' is not a number");
  return v;
}

std::uint64_t parse_unsigned(const std::string& field, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || t.empty())
    throw SpecError(field, "'" + t + "' is not a non-negative integer");
  return v;
}

std::vector<double> parse_list(const std::string& field, const std::string& text) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number(field, item));
  return out;
}

}  // namespace

ExperimentSpec parse_spec(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw SpecError("line " + std::to_string(e.line()), e.message());
  }
  ExperimentSpec spec;
  spec.hash = fnv1a64(text);
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw SpecError(section, "keys must appear inside a section");
    if (section == "experiment") {
      for (const auto& [key, node] : body) {
        const std::string field = "experiment." + key;
        const std::string value = trim(node.data());
        if (key == "kind") {
          spec.kind = value;
        } else if (key == "id") {
          spec.id = value;
        } else if (key == "output") {
          spec.output = value;
        } else if (key == "realizations") {
          spec.realizations = static_cast<Index>(parse_unsigned(field, value));
        } else if (key == "master_seed") {
          spec.master_seed = parse_unsigned(field, value);
        } else if (key == "budget") {
          spec.budget = static_cast<std::int64_t>(parse_unsigned(field, value));
        } else {
          throw SpecError(field, "unknown key");
        }
      }
    } else if (section == "grid") {
      for (const auto& [key, node] : body) spec.grid.emplace_back(key, parse_list("grid." + key, node.data()));
    } else if (section == "constants") {
      for (const auto& [key, node] : body) spec.constants[key] = parse_number("constants." + key, node.data());
    } else {
      throw SpecError("[" + section + "]", "unknown section");
    }
  }
  return spec;
}

ExperimentSpec load_spec(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError(path.string(), "cannot open spec file");
  std::ostringstream ss;
  ss << in.rdbuf();
  ExperimentSpec spec = parse_spec(ss.str());
  if (spec.id.empty()) spec.id = path.stem().string();
  return spec;
}

const std::map<std::string, double>& kind_parameters(const std::string& kind) {
  static const std::map<std::string, std::map<std::string, double>> table = {
      {"sampler-stats", {{"d", 1}, {"L", 10}, {"rho", 1}, {"thinned", 0}, {"min_expected", 5}}},
      {"initial-scale",
       {{"d", 1}, {"L0", 40}, {"rho", 2}, {"h", 0.05}, {"energy_fraction", 0.5}, {"norm_factor", 1},
        {"c", 0.1}, {"upper_factor", 10}, {"p", 2}, {"slack", kDefaultSlack}}},
      {"good-box-sweep",
       {{"d", 1}, {"L", 20}, {"rho", 2}, {"h", 0.1}, {"energy", 0}, {"energy_fraction", 0.5}, {"L0", 40},
        {"c", 0}, {"calibration_L", 20}, {"calibration_realizations", 50}, {"calibration_quantile", 0.5},
        {"calibration_safety", 0.5}, {"slack", kDefaultSlack}}},
      {"localization-profile", {{"d", 1}, {"L", 50}, {"rho", 5}, {"h", 0.05}, {"eigen_count", 5}, {"r2_min", 0.9}}},
      {"dynamical-moment",
       {{"d", 1}, {"L", 50}, {"rho", 5}, {"h", 0.05}, {"p", 2}, {"window_lo", 0}, {"window_hi", -1},
        {"t_min", 10}, {"t_max", 1000}, {"t_count", 41}}},
      {"stability",
       {{"d", 1}, {"L", 20}, {"rho", 2}, {"h", 0.05}, {"delta", 1e-3}, {"window_lo", 0}, {"window_hi", 3},
        {"perturbations", 10}}},
      {"density-sweep",
       {{"d", 1}, {"L", 20}, {"rho", 2}, {"h", 0.1}, {"energy", 1}, {"c", 0.05}, {"slack", kDefaultSlack}}},
      {"free-site-demo",
       {{"d", 1}, {"L", 10}, {"rho", 2}, {"h", 0.1}, {"free_sites", 4}, {"c", 0.01}, {"offset", 1e-7},
        {"slack", kDefaultSlack}}},
  };
  const auto it = table.find(kind);
  if (it == table.end()) throw SpecError("experiment.kind", "unknown kind '" + kind + "'");
  return it->second;
}

std::vector<Params> expand_grid(const ExperimentSpec& spec) {
  std::vector<Params> cells;
  if (spec.grid.empty()) return cells;
  Params base = kind_parameters(spec.kind);
  for (const auto& [k, v] : spec.constants) base[k] = v;
  std::size_t total = 1;
  for (const auto& [name, values] : spec.grid) total *= values.size();
  cells.reserve(total);
  for (std::size_t flat = 0; flat < total; ++flat) {
    Params p = base;
    std::size_t rem = flat;
    for (auto it = spec.grid.rbegin(); it != spec.grid.rend(); ++it) {
      p[it->first] = it->second[rem % it->second.size()];
      rem /= it->second.size();
    }
    cells.push_back(std::move(p));
  }
  return cells;
}

std::int64_t task_count(const ExperimentSpec& spec) {
  std::int64_t cells = spec.grid.empty() ? 0 : 1;
  for (const auto& [name, values] : spec.grid) cells *= static_cast<std::int64_t>(values.size());
  return cells * static_cast<std::int64_t>(spec.realizations);
}

void validate_spec(const ExperimentSpec& spec) {
  if (spec.kind.empty()) throw SpecError("experiment.kind", "missing");
  const auto& known = kind_parameters(spec.kind);
  if (spec.realizations < 1) throw SpecError("experiment.realizations", "must be at least 1");
  std::set<std::string> seen;
  for (const auto& [name, values] : spec.grid) {
    if (!known.count(name)) throw SpecError("grid." + name, "unknown parameter for kind " + spec.kind);
    if (!seen.insert(name).second) throw SpecError("grid." + name, "duplicate axis");
    if (spec.constants.count(name)) throw SpecError("grid." + name, "also set in [constants]");
  }
  for (const auto& [name, value] : spec.constants)
    if (!known.count(name)) throw SpecError("constants." + name, "unknown parameter for kind " + spec.kind);
  if (task_count(spec) > spec.budget) {
    std::ostringstream msg;
    msg << "budget exceeded: " << task_count(spec) / spec.realizations << " cells x " << spec.realizations
        << " realizations = " << task_count(spec) << " > " << spec.budget;
    throw BudgetError(msg.str());
  }
}

// ---------------------------------------------------------------------------
// Experiment kinds

namespace {

double get(const Params& p, const std::string& key) {
  const auto it = p.find(key);
  if (it == p.end()) throw SpecError(key, "parameter missing");
  return it->second;
}

int get_int(const Params& p, const std::string& key) {
  const double v = get(p, key);
  if (v != std::round(v)) throw SpecError(key, "must be an integer");
  return static_cast<int>(v);
}

Box cell_box(const Params& p, const std::string& side = "L") {
  return Box::centered(get_int(p, "d"), get(p, side));
}

PointConfig sample_or_empty(const Box& box, double rho, std::uint64_t seed) {
  if (rho == 0.0) {
    PointConfig c;
    c.box = box;
    c.points = Points(box.dim, 0);
    c.density = 0.0;
    c.seed = seed;
    return c;
  }
  return sample_poisson(box, rho, seed);
}

double flag(bool b) { return b ? 1.0 : 0.0; }

struct Kind {
  /// Adjusts every cell before execution (calibration); may be empty.
  std::function<void(std::vector<Params>&, const ExperimentSpec&)> prepare;
  std::function<TaskOutput(const Params&, Index, std::uint64_t)> task;
  std::function<std::vector<Metric>(const Params&, const std::vector<TaskOutput>&)> summarize;
};

double metric(const TaskOutput& o, const std::string& name) {
  for (const auto& m : o.metrics)
    if (m.name == name) return m.value;
  return std::numeric_limits<double>::quiet_NaN();
}

std::vector<Metric> proportion_summary(const std::vector<TaskOutput>& outs, const std::string& name, double L, int d,
                                       double slack) {
  Index successes = 0;
  for (const auto& o : outs) successes += metric(o, name) == 1.0 ? 1 : 0;
  const auto e = make_estimate(successes, static_cast<Index>(outs.size()), L, d, slack);
  return {{"samples", double(e.samples), ""},   {"successes", double(e.successes), ""},
          {"estimate", e.estimate, ""},         {"ci_lo", e.interval.lo, ""},
          {"ci_hi", e.interval.hi, ""},         {"reference", e.reference, ""}};
}

Kind sampler_stats() {
  Kind k;
  k.task = [](const Params& p, Index, std::uint64_t seed) {
    const Box box = cell_box(p);
    const double rho = get(p, "rho");
    TaskOutput out;
    if (get(p, "thinned") != 0.0) {
      const PointConfig c = sample_thinned(box, rho, seed);
      out.metrics.push_back({"count", double(marked_subset(c).size()), ""});
      out.metrics.push_back({"total", double(c.size()), ""});
    } else {
      out.metrics.push_back({"count", double(sample_poisson(box, rho, seed).size()), ""});
    }
    out.record["count"] = out.metrics.front().value;
    return out;
  };
  k.summarize = [](const Params& p, const std::vector<TaskOutput>& outs) {
    std::vector<std::int64_t> counts;
    double mean = 0.0;
    for (const auto& o : outs) {
      counts.push_back(static_cast<std::int64_t>(metric(o, "count")));
      mean += metric(o, "count");
    }
    mean /= static_cast<double>(outs.size());
    double var = 0.0;
    for (auto c : counts) var += (c - mean) * (c - mean);
    var /= std::max<double>(1.0, static_cast<double>(outs.size()) - 1.0);
    const double expected = get(p, "rho") * cell_box(p).volume();
    const auto chi = chi_square_poisson(counts, expected, get(p, "min_expected"));
    return std::vector<Metric>{{"mean", mean, ""},           {"variance", var, ""},
                               {"expected", expected, ""},   {"chi2", chi.statistic, ""},
                               {"dof", double(chi.dof), ""}, {"p_value", chi.p_value, ""},
                               {"passes_0.01", flag(chi.passes(0.01)), ""}};
  };
  return k;
}

Kind initial_scale() {
  Kind k;
  k.task = [](const Params& p, Index, std::uint64_t seed) {
    const int d = get_int(p, "d");
    const ScaleParams sc = derive_scales(get(p, "rho"), get(p, "L0"), d, get(p, "slack"), get(p, "p"));
    const Box box = cell_box(p, "L0");
    const Grid grid = build_grid(box, get(p, "h"));
    const PointConfig config = sample_poisson(box, sc.density, seed);
    InitialScaleConstants cst;
    cst.norm_factor = get(p, "norm_factor");
    cst.c = get(p, "c");
    cst.upper_factor = get(p, "upper_factor");
    cst.attenuation_seed = seed;
    const double E = get(p, "energy_fraction") * sc.E0;
    const auto r = initial_scale_check(config, sc, SingleSiteSpec{}, grid, E, cst);
    TaskOutput out;
    auto& m = out.metrics;
    m.push_back({"energy", E, ""});
    m.push_back({"cell_event", flag(r.cell_event.holds), ""});
    m.push_back({"split_ok", flag(r.split_ok), r.split_error.empty() ? "" : "split_error"});
    if (r.gamma) {
      m.push_back({"gamma_norm", r.gamma->gamma_norm, ""});
      m.push_back({"gamma_hypothesis", flag(r.gamma->hypothesis), ""});
      m.push_back({"contradiction", flag(r.gamma->contradiction), ""});
      m.push_back({"average_constant", r.average_constant, ""});
      m.push_back({"resolvent_norm", r.resolvent_norm, ""});
      m.push_back({"norm_ratio", r.norm_ratio, ""});
      m.push_back({"worst_offdiag", r.worst_offdiag, ""});
      m.push_back({"effective_rate", r.effective_rate, ""});
      m.push_back({"robust_resolvent_norm", r.robust_resolvent_norm, ""});
      m.push_back({"robust_ok", flag(r.robust_ok), ""});
    }
    m.push_back({"passes", flag(r.passes), ""});
    out.record["passes"] = r.passes;
    out.record["cell_event"] = r.cell_event.holds;
    if (r.cell_event.failing_cell) out.record["failing_cell"] = *r.cell_event.failing_cell;
    if (!r.split_error.empty()) out.record["split_error"] = r.split_error;
    out.record["resolvent_norm"] = r.resolvent_norm;
    return out;
  };
  k.summarize = [](const Params& p, const std::vector<TaskOutput>& outs) {
    auto s = proportion_summary(outs, "passes", get(p, "L0"), get_int(p, "d"), get(p, "slack"));
    // The reported comparison is 1 - L0^{-p + d}.
    s.back() = {"reference", 1.0 - std::pow(get(p, "L0"), -get(p, "p") + get(p, "d")), ""};
    return s;
  };
  return k;
}

double cell_energy(const Params& p) {
  const double fraction = get(p, "energy_fraction");
  if (fraction > 0.0) return fraction * derive_scales(get(p, "rho"), get(p, "L0"), get_int(p, "d"), get(p, "slack")).E0;
  return get(p, "energy");
}

MonteCarloSpec mc_spec(const Params& p, double L, double energy, std::uint64_t master) {
  MonteCarloSpec ms;
  ms.dim = get_int(p, "d");
  ms.density = get(p, "rho");
  ms.L = L;
  ms.spacing = get(p, "h");
  ms.energy = energy;
  ms.master_seed = master;
  ms.c = get(p, "c");
  ms.slack = get(p, "slack");
  return ms;
}

Kind good_box_sweep() {
  Kind k;
  k.prepare = [](std::vector<Params>& cells, const ExperimentSpec& spec) {
    if (cells.empty()) return;
    std::map<std::string, double> calibrated;  // keyed by the non-swept calibration inputs
    for (auto& p : cells) {
      if (get(p, "c") > 0.0) continue;
      Params key = {{"d", p["d"]}, {"rho", p["rho"]}, {"h", p["h"]}, {"calibration_L", p["calibration_L"]}};
      const std::string name = format_params(key);
      if (!calibrated.count(name)) {
        const auto n = static_cast<Index>(get(p, "calibration_realizations"));
        MonteCarloSpec ms = mc_spec(p, get(p, "calibration_L"), -1.0, derive_seed(spec.master_seed, 0, Stream::Engineering));
        ms.c = 1.0;
        std::vector<GoodBoxReport> reports;
        const Box box = Box::centered(ms.dim, ms.L);
        const Grid grid = build_grid(box, ms.spacing);
        for (Index i = 0; i < n; ++i) {
          const PointConfig config = sample_poisson(box, ms.density, realization_seed(ms.master_seed, i));
          reports.push_back(good_box_check(assemble_field(grid, PotentialField(config, ms.spec)), -1.0, ms.L, 1.0,
                                           ms.slack));
        }
        calibrated[name] =
            calibrate_decay_constant(reports, get(p, "calibration_quantile"), get(p, "calibration_safety"));
      }
      p["c"] = calibrated[name];
    }
  };
  k.task = [](const Params& p, Index i, std::uint64_t) {
    const double E = cell_energy(p);
    // good_box_realization derives the seed from (master, i); pass the
    // master through so both paths agree.
    MonteCarloSpec ms = mc_spec(p, get(p, "L"), E, static_cast<std::uint64_t>(get(p, "__master")));
    const auto r = good_box_realization(ms, i);
    TaskOutput out;
    out.metrics = {{"energy", E, ""},
                   {"c", ms.c, ""},
                   {"verdict", flag(r.verdict), r.resonance ? "resonance" : ""},
                   {"resolvent_norm", r.resolvent_norm, ""},
                   {"worst_offdiag", r.worst_offdiag, ""},
                   {"effective_rate", r.effective_rate, ""}};
    out.record["verdict"] = r.verdict;
    out.record["resonance"] = r.resonance;
    out.record["resolvent_norm"] = r.resolvent_norm;
    out.record["worst_offdiag"] = r.worst_offdiag;
    return out;
  };
  k.summarize = [](const Params& p, const std::vector<TaskOutput>& outs) {
    auto s = proportion_summary(outs, "verdict", get(p, "L"), get_int(p, "d"), get(p, "slack"));
    s.push_back({"c", get(p, "c"), ""});
    s.push_back({"energy", cell_energy(p), ""});
    return s;
  };
  return k;
}

Eigen::MatrixXd lowest_eigenvectors(const DiscreteHamiltonian& H, Index count, Vec& values) {
  if (H.size() <= kDenseCap) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.dense());
    values = es.eigenvalues().head(count);
    return es.eigenvectors().leftCols(count);
  }
  const auto r = nearest_eigenpairs(H, H.lower_bound() - 1.0, count);
  values = r.eigenvalues;
  return r.eigenvectors;
}

Kind localization_profile() {
  Kind k;
  k.task = [](const Params& p, Index, std::uint64_t seed) {
    const Box box = cell_box(p);
    const Grid grid = build_grid(box, get(p, "h"));
    const auto H = assemble_field(grid, PotentialField(sample_poisson(box, get(p, "rho"), seed), SingleSiteSpec{}));
    const auto count = std::min<Index>(static_cast<Index>(get(p, "eigen_count")), H.size());
    Vec values;
    const Eigen::MatrixXd vecs = lowest_eigenvectors(H, count, values);
    TaskOutput out;
    const double r2_min = get(p, "r2_min");
    for (Index j = 0; j < count; ++j) {
      const Vec phi = vecs.col(j) / std::sqrt(grid.cell_volume());
      const std::string tag = "_" + std::to_string(j);
      out.metrics.push_back({"eigenvalue" + tag, values(j), ""});
      out.metrics.push_back({"ipr" + tag, ipr(phi, grid), ""});
      const Vec center = localization_center(phi, grid);
      try {
        const DecayFit f = decay_fit(phi, grid, center);
        const bool good = f.rate > 0.0 && f.r2 >= r2_min;
        out.metrics.push_back({"rate" + tag, f.rate, ""});
        out.metrics.push_back({"r2" + tag, f.r2, ""});
        out.metrics.push_back({"good" + tag, flag(good), ""});
        for (std::size_t q = 0; q < f.distances.size(); ++q)
          out.series.push_back({"decay" + tag, f.distances[q], f.log_norms[q]});
      } catch (const InsufficientDecayRange&) {
        out.metrics.push_back({"good" + tag, 0.0, "insufficient_range"});
      }
    }
    out.record["eigenvalues"] = std::vector<double>(values.data(), values.data() + values.size());
    return out;
  };
  k.summarize = [](const Params&, const std::vector<TaskOutput>& outs) {
    double good = 0.0, total = 0.0;
    for (const auto& o : outs)
      for (const auto& m : o.metrics)
        if (m.name.rfind("good_", 0) == 0) {
          good += m.value;
          total += 1.0;
        }
    return std::vector<Metric>{{"good", good, ""}, {"fits", total, ""}, {"good_fraction", good / total, ""}};
  };
  return k;
}

std::vector<double> log_times(const Params& p) {
  const double t0 = get(p, "t_min"), t1 = get(p, "t_max");
  const int n = get_int(p, "t_count");
  if (!(t0 > 0.0 && t1 > t0 && n >= 2)) throw SpecError("t_min/t_max/t_count", "need 0 < t_min < t_max, t_count >= 2");
  std::vector<double> ts;
  for (int i = 0; i < n; ++i) ts.push_back(t0 * std::pow(t1 / t0, double(i) / (n - 1)));
  return ts;
}

Kind dynamical_moment_kind() {
  Kind k;
  k.task = [](const Params& p, Index, std::uint64_t seed) {
    const Box box = cell_box(p);
    const Grid grid = build_grid(box, get(p, "h"));
    const auto H = assemble_field(grid, PotentialField(sample_or_empty(box, get(p, "rho"), seed), SingleSiteSpec{}));
    Window w{get(p, "window_lo"), get(p, "window_hi")};
    if (w.hi < 0.0) w = {H.lower_bound() - 1.0, H.upper_bound() + 1.0};
    const auto times = log_times(p);
    const auto m = dynamical_moment(eigen_window(H, w), grid, get(p, "p"), times);
    TaskOutput out;
    std::vector<double> lt, lm;
    const double split = std::sqrt(times.front() * times.back());
    double early = 0.0, late = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      out.series.push_back({"moment", times[i], m.trajectory[i]});
      if (m.trajectory[i] > 0.0) {
        lt.push_back(std::log(times[i]));
        lm.push_back(std::log(m.trajectory[i]));
      }
      (times[i] <= split ? early : late) = std::max(times[i] <= split ? early : late, m.trajectory[i]);
    }
    const double exponent = lt.size() >= 2 ? linear_fit(lt, lm).slope : std::numeric_limits<double>::quiet_NaN();
    out.metrics = {{"window_count", double(m.window_count), m.empty_window ? "empty_window" : ""},
                   {"sup", m.sup, ""},
                   {"growth_exponent", exponent, ""},
                   {"sup_growth", early > 0.0 ? std::max(early, late) / early - 1.0 : 0.0, ""}};
    out.record["sup"] = m.sup;
    out.record["growth_exponent"] = exponent;
    return out;
  };
  k.summarize = [](const Params&, const std::vector<TaskOutput>& outs) {
    double sup = 0.0, growth = 0.0, exponent = 0.0;
    for (const auto& o : outs) {
      sup = std::max(sup, metric(o, "sup"));
      growth = std::max(growth, metric(o, "sup_growth"));
      exponent += metric(o, "growth_exponent") / static_cast<double>(outs.size());
    }
    return std::vector<Metric>{{"sup", sup, ""}, {"max_sup_growth", growth, ""}, {"mean_growth_exponent", exponent, ""}};
  };
  return k;
}

Kind stability() {
  Kind k;
  k.task = [](const Params& p, Index, std::uint64_t seed) {
    const Box box = cell_box(p);
    const Grid grid = build_grid(box, get(p, "h"));
    const PointConfig config = sample_poisson(box, get(p, "rho"), seed);
    const auto rows = eigenvalue_stability(config, {get(p, "delta")}, Window{get(p, "window_lo"), get(p, "window_hi")},
                                           static_cast<Index>(get(p, "perturbations")),
                                           derive_seed(seed, 0, Stream::Perturbation), SingleSiteSpec{}, grid);
    const auto& r = rows.front();
    TaskOutput out;
    out.metrics = {{"max_shift", r.max_shift, r.crossing ? "crossing" : ""},
                   {"max_potential_change", r.max_potential_change, ""},
                   {"first_order_bound", r.first_order_bound, ""},
                   {"weyl_ok", flag(r.weyl_ok), ""},
                   {"bound_ok", flag(r.bound_ok), ""},
                   {"admissible", flag(r.admissible), ""}};
    out.record["max_shift"] = r.max_shift;
    out.record["shifts"] = r.shifts;
    return out;
  };
  k.summarize = [](const Params& p, const std::vector<TaskOutput>& outs) {
    double shift = 0.0, weyl = 1.0, bound = 1.0;
    for (const auto& o : outs) {
      shift = std::max(shift, metric(o, "max_shift"));
      weyl = std::min(weyl, metric(o, "weyl_ok"));
      bound = std::min(bound, metric(o, "bound_ok"));
    }
    return std::vector<Metric>{{"delta", get(p, "delta"), ""}, {"max_shift", shift, ""},
                               {"weyl_ok", weyl, ""},          {"bound_ok", bound, ""}};
  };
  return k;
}

Kind density_sweep() {
  Kind k;
  k.task = [](const Params& p, Index, std::uint64_t seed) {
    const Box box = cell_box(p);
    const Grid grid = build_grid(box, get(p, "h"));
    const auto H = assemble_field(grid, PotentialField(sample_poisson(box, get(p, "rho"), seed), SingleSiteSpec{}));
    const auto report = good_box_check(H, get(p, "energy"), get(p, "L"), get(p, "c"), get(p, "slack"));
    Vec values;
    const Eigen::MatrixXd vecs = lowest_eigenvectors(H, 1, values);
    const Vec phi = vecs.col(0) / std::sqrt(grid.cell_volume());
    TaskOutput out;
    out.metrics = {{"verdict", flag(report.verdict), report.resonance ? "resonance" : ""},
                   {"resolvent_norm", report.resolvent_norm, ""},
                   {"worst_offdiag", report.worst_offdiag, ""},
                   {"lowest_eigenvalue", values(0), ""}};
    try {
      const auto f = decay_fit(phi, grid, localization_center(phi, grid));
      out.metrics.push_back({"rate", f.rate, ""});
      out.metrics.push_back({"r2", f.r2, ""});
    } catch (const InsufficientDecayRange&) {
      out.metrics.push_back({"rate", std::numeric_limits<double>::quiet_NaN(), "insufficient_range"});
    }
    out.record["verdict"] = report.verdict;
    out.record["lowest_eigenvalue"] = values(0);
    return out;
  };
  k.summarize = [](const Params& p, const std::vector<TaskOutput>& outs) {
    return proportion_summary(outs, "verdict", get(p, "L"), get_int(p, "d"), get(p, "slack"));
  };
  return k;
}

Kind free_site_demo() {
  Kind k;
  k.task = [](const Params& p, Index, std::uint64_t seed) {
    const Box box = cell_box(p);
    const Grid grid = build_grid(box, get(p, "h"));
    PointConfig config = sample_poisson(box, get(p, "rho"), seed);
    const Index n_free = std::min<Index>(static_cast<Index>(get(p, "free_sites")), config.size());
    // The n_free sites nearest the center are free.
    std::vector<Index> order(static_cast<std::size_t>(config.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return (config.points.col(a) - box.center).norm() < (config.points.col(b) - box.center).norm();
    });
    config.free_flags = std::vector<bool>(static_cast<std::size_t>(config.size()), false);
    for (Index i = 0; i < n_free; ++i) (*config.free_flags)[static_cast<std::size_t>(order[i])] = true;
    const auto build = free_site_builder(config, SingleSiteSpec{}, grid);
    // Resonance: E sits `offset` above the lowest eigenvalue at t = 0.
    Vec values;
    lowest_eigenvectors(build(std::vector<double>(static_cast<std::size_t>(n_free), 0.0)), 1, values);
    const double E = values(0) + get(p, "offset");
    const double L = get(p, "L"), c = get(p, "c"), slack = get(p, "slack");
    const auto tuned = free_site_tune(build, n_free, E, L, c, slack);
    // Exhaustive oracle.
    std::optional<std::uint64_t> first;
    const std::uint64_t total = std::uint64_t{1} << n_free;
    for (std::uint64_t a = 0; a < total && !first; ++a) {
      std::vector<double> t(static_cast<std::size_t>(n_free));
      for (Index i = 0; i < n_free; ++i) t[static_cast<std::size_t>(i)] = double((a >> i) & 1u);
      if (good_box_check(build(t), E, L, c, slack).verdict) first = a;
    }
    const bool agrees = first ? (tuned.assignment && tuned.tried == static_cast<Index>(*first) + 1)
                              : (!tuned.assignment && tuned.tried == static_cast<Index>(total));
    TaskOutput out;
    out.metrics = {{"free_sites", double(n_free), ""},
                   {"energy", E, ""},
                   {"tried", double(tuned.tried), ""},
                   {"found", flag(tuned.assignment.has_value()), ""},
                   {"agrees", flag(agrees), ""}};
    if (tuned.assignment) out.record["assignment"] = *tuned.assignment;
    out.record["agrees"] = agrees;
    return out;
  };
  k.summarize = [](const Params&, const std::vector<TaskOutput>& outs) {
    double agree = 0.0, found = 0.0;
    for (const auto& o : outs) {
      agree += metric(o, "agrees");
      found += metric(o, "found");
    }
    return std::vector<Metric>{{"instances", double(outs.size()), ""}, {"found", found, ""}, {"agrees", agree, ""}};
  };
  return k;
}

const Kind& kind_impl(const std::string& name) {
  static const std::map<std::string, Kind> kinds = {
      {"sampler-stats", sampler_stats()},       {"initial-scale", initial_scale()},
      {"good-box-sweep", good_box_sweep()},     {"localization-profile", localization_profile()},
      {"dynamical-moment", dynamical_moment_kind()}, {"stability", stability()},
      {"density-sweep", density_sweep()},       {"free-site-demo", free_site_demo()}};
  return kinds.at(name);
}

// ---------------------------------------------------------------------------
// Checkpoints

json output_to_json(const TaskOutput& o) {
  json j;
  j["metrics"] = json::array();
  for (const auto& m : o.metrics) j["metrics"].push_back({m.name, format_double(m.value), m.flags});
  j["series"] = json::array();
  for (const auto& s : o.series) j["series"].push_back({s.series, format_double(s.x), format_double(s.y)});
  j["record"] = o.record;
  return j;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  std::from_chars(s.data(), s.data() + s.size(), v);
  return v;
}

TaskOutput output_from_json(const json& j) {
  TaskOutput o;
  for (const auto& m : j.at("metrics"))
    o.metrics.push_back({m.at(0).get<std::string>(), parse_double(m.at(1).get<std::string>()), m.at(2).get<std::string>()});
  for (const auto& s : j.at("series"))
    o.series.push_back({s.at(0).get<std::string>(), parse_double(s.at(1).get<std::string>()),
                        parse_double(s.at(2).get<std::string>())});
  o.record = j.at("record");
  return o;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

Params visible(Params p) {
  p.erase("__master");
  return p;
}

void write_manifest(const fs::path& dir, const ExperimentSpec& spec, const RunSummary& summary) {
  json manifest = {{"experiment", spec.id},
                   {"kind", spec.kind},
                   {"spec_hash", hex64(spec.hash)},
                   {"version", POISLOC_VERSION},
                   {"master_seed", spec.master_seed},
                   {"realizations", spec.realizations},
                   {"cells", summary.cells},
                   {"completed_cells", summary.completed},
                   {"status", summary.ok() ? "success" : "partial_failure"}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

fs::path resolve_output(const ExperimentSpec& spec, const RunOptions& options) {
  if (options.out) return *options.out;
  fs::path rel = spec.output.empty() ? fs::path(spec.id.empty() ? "experiment" : spec.id) : fs::path(spec.output);
  if (rel.is_absolute()) return rel;
  if (const char* root = std::getenv("POISLOC_OUTPUT_ROOT"); root && *root) return fs::path(root) / rel;
  return rel;
}

RunSummary run_experiment(ExperimentSpec spec, const RunOptions& options) {
  if (options.seed) spec.master_seed = *options.seed;
  if (options.budget) spec.budget = *options.budget;
  validate_spec(spec);
  const Kind& kind = kind_impl(spec.kind);
  std::vector<Params> cells = expand_grid(spec);
  for (auto& p : cells) p["__master"] = static_cast<double>(spec.master_seed);
  if (kind.prepare) kind.prepare(cells, spec);

  RunSummary summary;
  summary.output = resolve_output(spec, options);
  summary.cells = static_cast<Index>(cells.size());
  const fs::path dir = summary.output;
  if (cells.empty()) {
    fs::create_directories(dir);
    write_manifest(dir, spec, summary);
    return summary;
  }
  const fs::path checkpoints = dir / "cells";
  fs::create_directories(checkpoints);

  const Index R = spec.realizations;
  std::vector<std::vector<TaskOutput>> outputs(cells.size());
  std::vector<std::string> cell_error(cells.size());
  std::vector<char> done(cells.size(), 0);

  auto checkpoint_path = [&](std::size_t c) { return checkpoints / ("cell_" + std::to_string(c) + ".json"); };
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::ifstream in(checkpoint_path(c), std::ios::binary);
    if (!in) continue;
    try {
      const json j = json::parse(in);
      if (j.at("spec_hash") != hex64(spec.hash) || j.at("master_seed") != spec.master_seed ||
          j.at("params") != format_params(visible(cells[c])) || j.at("outputs").size() != static_cast<std::size_t>(R))
        continue;
      for (const auto& o : j.at("outputs")) outputs[c].push_back(output_from_json(o));
      done[c] = 1;
      ++summary.resumed;
    } catch (const std::exception&) {
      outputs[c].clear();
    }
  }

  std::vector<std::pair<std::size_t, Index>> tasks;
  for (std::size_t c = 0; c < cells.size(); ++c)
    if (!done[c]) {
      outputs[c].resize(static_cast<std::size_t>(R));
      for (Index r = 0; r < R; ++r) tasks.emplace_back(c, r);
    }
  std::vector<std::atomic<Index>> remaining(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) remaining[c] = done[c] ? 0 : R;
  std::mutex mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      const auto [c, r] = tasks[t];
      {
        std::lock_guard lock(mutex);
        if (!cell_error[c].empty()) {
          --remaining[c];
          continue;
        }
      }
      try {
        outputs[c][static_cast<std::size_t>(r)] = kind.task(cells[c], r, realization_seed(spec.master_seed, r));
      } catch (const std::exception& e) {
        std::lock_guard lock(mutex);
        if (cell_error[c].empty())
          cell_error[c] = "cell " + std::to_string(c) + " realization " + std::to_string(r) + ": " + e.what();
      }
      if (--remaining[c] == 0) {
        std::lock_guard lock(mutex);
        if (cell_error[c].empty()) {
          json j;
          j["spec_hash"] = hex64(spec.hash);
          j["master_seed"] = spec.master_seed;
          j["params"] = format_params(visible(cells[c]));
          j["outputs"] = json::array();
          for (const auto& o : outputs[c]) j["outputs"].push_back(output_to_json(o));
          write_file(checkpoint_path(c), j.dump());
          done[c] = 1;
        }
      }
    }
  };
  const unsigned workers = std::max(1u, options.workers);
  if (workers == 1 || tasks.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::ostringstream results, summ, series, ndjson, errors;
  results << "experiment,cell,params,realization,seed,metric,value,flags\n";
  summ << "experiment,cell,params,metric,value\n";
  series << "experiment,cell,realization,series,x,y\n";
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (!done[c]) {
      errors << cell_error[c] << '\n';
      summary.errors.push_back(cell_error[c]);
      continue;
    }
    ++summary.completed;
    const Params shown = visible(cells[c]);
    const std::string params = format_params(shown);
    for (Index r = 0; r < R; ++r) {
      const auto& o = outputs[c][static_cast<std::size_t>(r)];
      const auto seed = realization_seed(spec.master_seed, r);
      for (const auto& m : o.metrics)
        results << spec.id << ',' << c << ',' << params << ',' << r << ',' << seed << ',' << m.name << ','
                << format_double(m.value) << ',' << m.flags << '\n';
      for (const auto& s : o.series)
        series << spec.id << ',' << c << ',' << r << ',' << s.series << ',' << format_double(s.x) << ','
               << format_double(s.y) << '\n';
      json line = {{"experiment", spec.id}, {"cell", c}, {"realization", r}, {"seed", seed}, {"params", shown}};
      line.update(o.record);
      ndjson << line.dump() << '\n';
    }
    for (const auto& m : kind.summarize(cells[c], outputs[c]))
      summ << spec.id << ',' << c << ',' << params << ',' << m.name << ',' << format_double(m.value) << '\n';
  }
  write_file(dir / "results.csv", results.str());
  write_file(dir / "summary.csv", summ.str());
  write_file(dir / "series.csv", series.str());
  write_file(dir / "realizations.ndjson", ndjson.str());
  if (!summary.errors.empty()) write_file(dir / "errors.log", errors.str());
  else if (fs::exists(dir / "errors.log")) fs::remove(dir / "errors.log");

  write_manifest(dir, spec, summary);
  return summary;
}

bool validate_report(const ExperimentSpec& spec_in, std::ostream& out, std::optional<std::int64_t> budget) {
  ExperimentSpec spec = spec_in;
  if (budget) spec.budget = *budget;
  out << "kind: " << spec.kind << "\nid: " << spec.id << '\n';
  bool ok = true;
  try {
    validate_spec(spec);
  } catch (const std::exception& e) {
    out << "problem: " << e.what() << '\n';
    ok = false;
  }
  const std::int64_t tasks = task_count(spec);
  const std::int64_t ncells = spec.realizations > 0 ? tasks / spec.realizations : 0;
  out << "cells: " << ncells << "\nrealizations: " << spec.realizations << "\ntasks: " << ncells << " x "
      << spec.realizations << " = " << tasks << "\nbudget: " << spec.budget << '\n';
  if (!ok) return false;
  const auto cells = expand_grid(spec);
  const auto& known = kind_parameters(spec.kind);
  const std::string side = known.count("L0") ? "L0" : "L";
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& p = cells[c];
    out << "cell " << c << ": " << format_params(p) << '\n';
    if (!p.count("rho") || !p.count(side)) continue;
    try {
      const double slack = p.count("slack") ? p.at("slack") : kDefaultSlack;
      const auto s = derive_scales(p.at("rho"), p.at(side), get_int(p, "d"), slack);
      out << std::setprecision(12) << "  scales (" << side << " = " << s.L0 << "): ell0 = " << s.ell
          << ", E0 = " << s.E0 << ", K = " << s.K << '\n';
    } catch (const std::exception& e) {
      out << "  scales: " << e.what() << '\n';
    }
  }
  return ok;
}

}  // namespace poisloc
