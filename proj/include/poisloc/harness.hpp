#pragma once

#include "poisloc/msa_verifier.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace poisloc {

/// Invalid spec; `field` names the offending entry ("section.key").
class SpecError : public std::runtime_error {
 public:
  SpecError(std::string field, const std::string& reason)
      : std::runtime_error(field + ": " + reason), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::int64_t kDefaultBudget = 1'000'000;

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {"sampler-stats",         "initial-scale",    "good-box-sweep",
                                                 "localization-profile", "dynamical-moment", "stability",
                                                 "density-sweep",        "free-site-demo"};
  return kinds;
}

/// A parsed spec file. Sections: [experiment] (kind, id, realizations,
/// master_seed, output, budget), [grid] (name = comma separated values) and
/// [constants] (name = value).
struct ExperimentSpec {
  std::string kind;
  std::string id;
  Index realizations = 1;
  std::uint64_t master_seed = 1;
  std::string output;
  std::int64_t budget = kDefaultBudget;
  /// Grid axes in declaration order.
  std::vector<std::pair<std::string, std::vector<double>>> grid;
  std::map<std::string, double> constants;
  /// FNV-1a 64 of the spec text.
  std::uint64_t hash = 0;
};

std::uint64_t fnv1a64(std::string_view bytes);

ExperimentSpec parse_spec(const std::string& text);
ExperimentSpec load_spec(const std::filesystem::path& path);

/// Parameter name -> default for an experiment kind.
const std::map<std::string, double>& kind_parameters(const std::string& kind);

using Params = std::map<std::string, double>;

/// Cartesian product of the grid axes (first axis slowest), each cell merged
/// over the kind defaults and the constants. No axes means no cells.
std::vector<Params> expand_grid(const ExperimentSpec& spec);

/// cells * realizations.
std::int64_t task_count(const ExperimentSpec& spec);

/// Throws SpecError or BudgetError.
void validate_spec(const ExperimentSpec& spec);

struct Metric {
  std::string name;
  double value = 0.0;
  std::string flags;
};

struct SeriesPoint {
  std::string series;
  double x = 0.0;
  double y = 0.0;
};

struct TaskOutput {
  std::vector<Metric> metrics;
  std::vector<SeriesPoint> series;
  nlohmann::json record = nlohmann::json::object();
};

/// Shortest round-trip decimal form; "nan", "inf", "-inf" for non-finite.
std::string format_double(double v);
/// "a=1;b=2" in key order.
std::string format_params(const Params& p);

struct RunOptions {
  unsigned workers = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> budget;
  std::optional<std::filesystem::path> out;
};

struct RunSummary {
  std::filesystem::path output;
  Index cells = 0;
  Index completed = 0;
  Index resumed = 0;
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

/// Output directory: --out, else the spec's `output` (or its id) under
/// $POISLOC_OUTPUT_ROOT when that is set.
std::filesystem::path resolve_output(const ExperimentSpec& spec, const RunOptions& options);

/// Runs every cell x realization. Files written to the output directory:
/// manifest.json, results.csv, summary.csv, series.csv, realizations.ndjson,
/// errors.log (only on failures) and cells/ (per-cell checkpoints).
RunSummary run_experiment(ExperimentSpec spec, const RunOptions& options = {});

/// Human-readable validation report, including derived scales per cell.
/// Returns false when the spec has problems.
bool validate_report(const ExperimentSpec& spec, std::ostream& out, std::optional<std::int64_t> budget = {});

}  // namespace poisloc
