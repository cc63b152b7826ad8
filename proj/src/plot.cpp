#include "poisloc/plot.hpp"

#include "poisloc/msa_verifier.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace poisloc {

namespace fs = std::filesystem;

std::vector<std::size_t> CsvTable::require(const std::vector<std::string>& names, const std::string& source) const {
  std::vector<std::size_t> idx;
  std::string missing;
  for (const auto& n : names) {
    const auto it = std::find(header.begin(), header.end(), n);
    if (it == header.end()) {
      missing += (missing.empty() ? "" : ", ") + n;
    } else {
      idx.push_back(static_cast<std::size_t>(it - header.begin()));
    }
  }
  if (!missing.empty()) throw MissingColumns(source + ": missing columns: " + missing);
  return idx;
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingColumns(path.string() + ": file not found");
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (std::getline(in, line)) t.header = split(line);
  while (std::getline(in, line))
    if (!line.empty()) t.rows.push_back(split(line));
  return t;
}

namespace {

double num(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = std::numeric_limits<double>::quiet_NaN();
  std::from_chars(s.data(), s.data() + s.size(), v);
  return v;
}

std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      default: o += c;
    }
  }
  return o;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream ss;
  ss.precision(precision);
  ss << v;
  return ss.str();
}

/// Parses "a=1;b=2".
std::map<std::string, double> parse_params(const std::string& s) {
  std::map<std::string, double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto eq = item.find('=');
    if (eq != std::string::npos) out[item.substr(0, eq)] = num(item.substr(eq + 1));
  }
  return out;
}

}  // namespace

std::string SvgPlot::render() const {
  constexpr double W = 640, H = 420, ml = 70, mr = 20, mt = 40, mb = 55;
  auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return log_y ? std::log10(v) : v; };
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!log_x || x > 0) && (!log_y || y > 0);
  };
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      double lo = s.y[i], hi = s.y[i];
      if (i < s.lo.size()) lo = std::min(lo, s.lo[i]);
      if (i < s.hi.size()) hi = std::max(hi, s.hi[i]);
      if (!log_y || lo > 0) y0 = std::min(y0, ty(lo));
      if (!log_y || hi > 0) y1 = std::max(y1, ty(hi));
    }
  if (!(x0 <= x1)) x0 = 0, x1 = 1;
  if (!(y0 <= y1)) y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double px = (W - ml - mr) / (x1 - x0), py = (H - mt - mb) / (y1 - y0);
  auto X = [&](double v) { return ml + (tx(v) - x0) * px; };
  auto Y = [&](double v) { return H - mb - (ty(v) - y0) * py; };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n"
    << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\"" << H - mt - mb
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double vx = x0 + (x1 - x0) * k / 4.0, vy = y0 + (y1 - y0) * k / 4.0;
    const double sx = ml + (vx - x0) * px, sy = H - mb - (vy - y0) * py;
    o << "<line x1=\"" << sx << "\" y1=\"" << H - mb << "\" x2=\"" << sx << "\" y2=\"" << H - mb + 5
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << sx << "\" y=\"" << H - mb + 18 << "\" text-anchor=\"middle\">"
      << fmt(log_x ? std::pow(10.0, vx) : vx, 3) << "</text>\n"
      << "<line x1=\"" << ml - 5 << "\" y1=\"" << sy << "\" x2=\"" << ml << "\" y2=\"" << sy << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << ml - 8 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\">"
      << fmt(log_y ? std::pow(10.0, vy) : vy, 3) << "</text>\n";
  }
  o << "<text x=\"" << ml + (W - ml - mr) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << escape(x_label)
    << "</text>\n"
    << "<text x=\"16\" y=\"" << mt + (H - mt - mb) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << mt + (H - mt - mb) / 2 << ")\">" << escape(y_label) << "</text>\n";
  double legend_y = mt + 16;
  for (const auto& s : series) {
    o << "<g stroke=\"" << s.color << "\" fill=\"" << s.color << "\">\n";
    if (s.line) {
      o << "<polyline fill=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (usable(s.x[i], s.y[i])) o << X(s.x[i]) << ',' << Y(s.y[i]) << ' ';
      o << "\"/>\n";
    } else {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!usable(s.x[i], s.y[i])) continue;
        if (i < s.lo.size() && i < s.hi.size() && (!log_y || s.lo[i] > 0))
          o << "<line x1=\"" << X(s.x[i]) << "\" y1=\"" << Y(s.lo[i]) << "\" x2=\"" << X(s.x[i]) << "\" y2=\""
            << Y(s.hi[i]) << "\"/>\n";
        o << "<circle cx=\"" << X(s.x[i]) << "\" cy=\"" << Y(s.y[i]) << "\" r=\"2.5\"/>\n";
      }
    }
    o << "</g>\n";
    if (!s.label.empty()) {
      o << "<text x=\"" << W - mr - 8 << "\" y=\"" << legend_y << "\" text-anchor=\"end\" fill=\"" << s.color << "\">"
        << escape(s.label) << "</text>\n";
      legend_y += 16;
    }
  }
  for (const auto& n : notes) {
    o << "<text x=\"" << ml + 8 << "\" y=\"" << legend_y << "\">" << escape(n) << "</text>\n";
    legend_y += 16;
  }
  o << "</svg>\n";
  return o.str();
}

namespace {

SvgPlot decay_plot(const fs::path& dir) {
  const CsvTable t = read_csv(dir / "series.csv");
  const auto c = t.require({"series", "x", "y"}, "series.csv");
  SvgPlot p{"Decay profile", "distance |x - center|", "log local norm", false, false, {}, {}};
  SvgSeries pts;
  pts.label = "local norms";
  for (const auto& r : t.rows)
    if (r[c[0]].rfind("decay", 0) == 0) {
      pts.x.push_back(num(r[c[1]]));
      pts.y.push_back(num(r[c[2]]));
    }
  if (pts.x.size() >= 2) {
    const LinearFit f = linear_fit(pts.x, pts.y);
    const auto [lo, hi] = std::minmax_element(pts.x.begin(), pts.x.end());
    SvgSeries line{"least squares fit", {*lo, *hi}, {f.intercept + f.slope * *lo, f.intercept + f.slope * *hi}, true,
                   "#d62728", {}, {}};
    p.notes.push_back("fit slope = " + fmt(f.slope, 6) + ", R^2 = " + fmt(f.r2, 4));
    p.series.push_back(std::move(pts));
    p.series.push_back(std::move(line));
  } else {
    p.series.push_back(std::move(pts));
  }
  return p;
}

SvgPlot probability_plot(const fs::path& dir) {
  const CsvTable t = read_csv(dir / "summary.csv");
  const auto c = t.require({"cell", "params", "metric", "value"}, "summary.csv");
  struct Cell {
    std::map<std::string, double> params;
    std::map<std::string, double> m;
  };
  std::map<long, Cell> cells;
  for (const auto& r : t.rows) {
    auto& cell = cells[std::stol(r[c[0]])];
    cell.params = parse_params(r[c[1]]);
    cell.m[r[c[2]]] = num(r[c[3]]);
  }
  SvgPlot p{"Good-box probability", "L", "P(good box)", false, false, {}, {}};
  SvgSeries est;
  est.label = "estimate with 95% score interval";
  double d = 1, slack = kDefaultSlack, Lmin = INFINITY, Lmax = -INFINITY;
  for (const auto& [k, cell] : cells) {
    if (!cell.m.count("estimate") || !cell.params.count("L")) continue;
    const double L = cell.params.at("L");
    est.x.push_back(L);
    est.y.push_back(cell.m.at("estimate"));
    est.lo.push_back(cell.m.count("ci_lo") ? cell.m.at("ci_lo") : cell.m.at("estimate"));
    est.hi.push_back(cell.m.count("ci_hi") ? cell.m.at("ci_hi") : cell.m.at("estimate"));
    if (cell.params.count("d")) d = cell.params.at("d");
    if (cell.params.count("slack")) slack = cell.params.at("slack");
    Lmin = std::min(Lmin, L);
    Lmax = std::max(Lmax, L);
  }
  SvgSeries ref;
  ref.label = "reference 1 - L^(-(3/8)d + slack)";
  ref.line = true;
  ref.color = "#2ca02c";
  if (Lmin <= Lmax) {
    for (int i = 0; i <= 64; ++i) {
      const double L = Lmin + (Lmax - Lmin) * i / 64.0;
      ref.x.push_back(L);
      ref.y.push_back(good_probability_reference(L, static_cast<int>(d), slack));
    }
  }
  p.series.push_back(std::move(est));
  p.series.push_back(std::move(ref));
  return p;
}

SvgPlot moment_plot(const fs::path& dir) {
  const CsvTable t = read_csv(dir / "series.csv");
  const auto c = t.require({"cell", "realization", "series", "x", "y"}, "series.csv");
  SvgPlot p{"Dynamical moment", "t", "moment", true, true, {}, {}};
  std::map<std::pair<std::string, std::string>, SvgSeries> lines;
  for (const auto& r : t.rows) {
    if (r[c[2]] != "moment") continue;
    auto& s = lines[{r[c[0]], r[c[1]]}];
    s.line = true;
    s.x.push_back(num(r[c[3]]));
    s.y.push_back(num(r[c[4]]));
  }
  for (auto& [key, s] : lines) p.series.push_back(std::move(s));
  return p;
}

SvgPlot stability_plot(const fs::path& dir) {
  const CsvTable t = read_csv(dir / "summary.csv");
  const auto c = t.require({"cell", "metric", "value"}, "summary.csv");
  std::map<long, std::map<std::string, double>> cells;
  for (const auto& r : t.rows) cells[std::stol(r[c[0]])][r[c[1]]] = num(r[c[2]]);
  SvgPlot p{"Eigenvalue stability", "delta", "max window eigenvalue shift", true, true, {}, {}};
  SvgSeries pts;
  pts.label = "max shift";
  std::vector<double> lx, ly;
  for (const auto& [k, m] : cells) {
    if (!m.count("delta") || !m.count("max_shift")) continue;
    pts.x.push_back(m.at("delta"));
    pts.y.push_back(m.at("max_shift"));
    if (m.at("delta") > 0 && m.at("max_shift") > 0) {
      lx.push_back(std::log(m.at("delta")));
      ly.push_back(std::log(m.at("max_shift")));
    }
  }
  p.series.push_back(std::move(pts));
  if (lx.size() >= 2) {
    const LinearFit f = linear_fit(lx, ly);
    p.notes.push_back("log-log slope = " + fmt(f.slope, 4));
  }
  return p;
}

}  // namespace

fs::path plot_results(const fs::path& dir, const std::string& kind) {
  SvgPlot plot;
  if (kind == "decay") {
    plot = decay_plot(dir);
  } else if (kind == "probability") {
    plot = probability_plot(dir);
  } else if (kind == "moment") {
    plot = moment_plot(dir);
  } else if (kind == "stability") {
    plot = stability_plot(dir);
  } else {
    throw std::invalid_argument("unknown plot kind '" + kind + "' (decay, probability, moment, stability)");
  }
  const fs::path out = dir / ("plot_" + kind + ".svg");
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + out.string());
  f << plot.render();
  return out;
}

}  // namespace poisloc
