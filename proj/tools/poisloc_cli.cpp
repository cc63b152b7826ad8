// poisloc: run, validate and plot localization experiments.
//
//   poisloc run <spec> [--workers N] [--seed S] [--budget M] [--out DIR]
//   poisloc validate <spec> [--budget M]
//   poisloc plot <dir> <kind>
//
// Exit codes: 0 success, 2 spec error, 3 execution error, 4 budget refusal.

#include "poisloc/harness.hpp"
#include "poisloc/plot.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

constexpr int kSpecError = 2;
constexpr int kExecutionError = 3;
constexpr int kBudgetRefusal = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poisson random Schroedinger operator localization laboratory"};
  app.require_subcommand(1);

  std::string spec_path;
  unsigned workers = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> budget;
  std::optional<std::string> out;

  auto* run = app.add_subcommand("run", "Execute every grid cell and realization of a spec");
  run->add_option("spec", spec_path, "Spec file")->required();
  run->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "Master seed (overrides the spec)");
  run->add_option("--budget", budget, "Maximum cells x realizations");
  run->add_option("--out", out, "Output directory (default: $POISLOC_OUTPUT_ROOT/<spec output>)");

  auto* validate = app.add_subcommand("validate", "Check a spec and print derived scales");
  validate->add_option("spec", spec_path, "Spec file")->required();
  validate->add_option("--budget", budget, "Maximum cells x realizations");

  std::string plot_dir, plot_kind;
  auto* plot = app.add_subcommand("plot", "Write an SVG plot from a results directory");
  plot->add_option("dir", plot_dir, "Results directory")->required();
  plot->add_option("kind", plot_kind, "decay | probability | moment | stability")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      poisloc::RunOptions options;
      options.workers = workers;
      options.seed = seed;
      options.budget = budget;
      if (out) options.out = *out;
      const auto summary = poisloc::run_experiment(poisloc::load_spec(spec_path), options);
      std::cout << "output: " << summary.output.string() << "\ncells: " << summary.completed << "/" << summary.cells
                << " (resumed " << summary.resumed << ")\n";
      for (const auto& e : summary.errors) std::cerr << "error: " << e << '\n';
      return summary.ok() ? 0 : kExecutionError;
    }
    if (*validate) {
      return poisloc::validate_report(poisloc::load_spec(spec_path), std::cout, budget) ? 0 : kSpecError;
    }
    if (*plot) {
      std::cout << poisloc::plot_results(plot_dir, plot_kind).string() << '\n';
      return 0;
    }
  } catch (const poisloc::SpecError& e) {
    std::cerr << "spec error: " << e.what() << '\n';
    return kSpecError;
  } catch (const poisloc::BudgetError& e) {
    std::cerr << "budget refusal: " << e.what() << '\n';
    return kBudgetRefusal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExecutionError;
  }
  return 0;
}
