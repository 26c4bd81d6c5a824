// Command-line front end: solve, project, sample, report.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfgdc/commands.hpp"

namespace fs = std::filesystem;
using namespace mfgdc;

int main(int argc, char** argv) {
  CLI::App app{"Mean field games with a density cap on the flat torus"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cli::kVersion);
  std::string config_path, out_dir;
  int threads = 0;
  bool verbose = false;
  app.add_option("--config", config_path, "JSON run configuration (or a run manifest)");
  app.add_option("--threads", threads, "worker threads (default: from config, else available cores)")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "output directory (overrides output.directory)");
  app.add_flag("-v,--verbose", verbose, "print the duality gap at every check");

  auto* solve = app.add_subcommand("solve", "solve, certify and write the run directory");
  auto* project = app.add_subcommand("project", "static projection and the density bound along the geodesic");
  auto* sample = app.add_subcommand("sample", "sample the optimal flow of a prior solve and test path optimality");
  auto* report = app.add_subcommand("report", "aggregate run directories into comparison tables");
  std::vector<std::string> run_dirs;
  report->add_option("runs", run_dirs, "run directories (default: --out)");
  for (auto* sc : {solve, project, sample, report}) sc->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kInvalid;
  }

  try {
    if (report->parsed()) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      if (dirs.empty() && !out_dir.empty()) dirs.push_back(out_dir);
      return cli::cmd_report(dirs, out_dir, std::cout, std::cerr);
    }
    if (config_path.empty()) {
      std::cerr << "error: --config is required for " << app.get_subcommands().front()->get_name() << '\n';
      return cli::kInvalid;
    }
    auto ctx = cli::make_context(load_config(config_path),
                                 out_dir.empty() ? std::nullopt : std::optional<fs::path>(out_dir),
                                 threads > 0 ? std::optional<int>(threads) : std::nullopt);
    ctx.verbose = verbose;
    if (solve->parsed()) return cli::cmd_solve(ctx);
    if (project->parsed()) return cli::cmd_project(ctx);
    if (sample->parsed()) return cli::cmd_sample(ctx);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cli::kInvalid;
  } catch (const cli::InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return cli::kInvalid;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return cli::kInvalid;
  } catch (const NotConvergedError& e) {
    std::cerr << "not converged: " << e.what() << '\n';
    return cli::kNotConverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kFailure;
  }
  return cli::kInvalid;
}
