// Command-line front end for the experiment runner.
//
//   selfsim run --config configs/ca_table1.json [--out DIR] [--seed N] [--jobs N]
//   selfsim train --stage dynamics|coarse|joint_nonself --config ...
//   selfsim report --out DIR | --config ...
//
// Exit status: 0 success, 1 failed assertion or stage, 2 usage or config error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "selfsim/errors.hpp"
#include "selfsim/experiment.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kAssertion = 1;
constexpr int kUsage = 2;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  bool verbose = false;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  if (config_required) opt->required();
  cmd->add_option("--out", c.out, "run directory (default: config output_dir, $SELFSIM_OUTPUT_ROOT/<name> or runs/<name>)");
  cmd->add_option("--seed", c.seed, "run only this seed instead of the config's list");
  cmd->add_option("--jobs", c.jobs, "cells trained concurrently")->check(CLI::PositiveNumber);
  cmd->add_flag("-v,--verbose", c.verbose, "log stages and training progress to stderr");
}

selfsim::ExperimentConfig load(const Common& c) {
  selfsim::ExperimentConfig cfg = selfsim::load_experiment(c.config);
  if (c.seed) cfg.seeds = {*c.seed};
  return cfg;
}

std::optional<fs::path> out_dir(const Common& c) {
  if (c.out.empty()) return std::nullopt;
  return fs::path(c.out);
}

int execute(const Common& c, selfsim::StopAfter stop) {
  const selfsim::ExperimentConfig cfg = load(c);
  const fs::path dir = selfsim::resolve_run_dir(cfg, out_dir(c));
  selfsim::RunOptions opt;
  opt.stop_after = stop;
  opt.jobs = c.jobs;
  opt.verbose = c.verbose;
  const selfsim::RunResult r = selfsim::run_experiment(cfg, dir, opt);
  std::cout << "run directory " << r.directory.string() << ": " << r.stages_run << " stages run, "
            << r.stages_skipped << " skipped, " << r.failed.size() << " failed\n";
  if (!r.failed.empty()) return kAssertion;
  if (stop != selfsim::StopAfter::analyze) return kOk;
  const selfsim::ReportResult rep = selfsim::report(dir);
  std::cout << rep.summary;
  return rep.ok() ? kOk : kAssertion;
}

int do_report(const Common& c) {
  fs::path dir;
  if (!c.out.empty()) {
    dir = c.out;
  } else if (!c.config.empty()) {
    dir = selfsim::resolve_run_dir(load(c), std::nullopt);
  } else {
    throw CLI::ValidationError("report needs --out or --config");
  }
  const selfsim::ReportResult rep = selfsim::report(dir);
  std::cout << rep.summary;
  return rep.ok() ? kOk : kAssertion;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn lattice dynamics and test them for self-similarity across scales."};
  app.set_version_flag("--version", selfsim::tool_version());
  app.require_subcommand(1);

  Common common;
  std::string stage = "coarse";
  auto* simulate = app.add_subcommand("simulate", "generate and store the system trajectories");
  auto* train = app.add_subcommand("train", "simulate if needed, then train up to --stage");
  auto* analyze = app.add_subcommand("analyze", "train if needed, then compute consistency and scaling artifacts");
  auto* run = app.add_subcommand("run", "full pipeline followed by report");
  auto* rep = app.add_subcommand("report", "aggregate a run directory and check the config's assertions");
  for (auto* cmd : {simulate, train, analyze, run}) add_common(cmd, common, true);
  add_common(rep, common, false);
  train->add_option("--stage", stage, "dynamics, coarse or joint_nonself")
      ->check(CLI::IsMember({"dynamics", "coarse", "joint_nonself"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*simulate) return execute(common, selfsim::StopAfter::simulate);
    if (*train) {
      return execute(common, stage == "dynamics" ? selfsim::StopAfter::dynamics : selfsim::StopAfter::coarse);
    }
    if (*analyze || *run) return execute(common, selfsim::StopAfter::analyze);
    return do_report(common);
  } catch (const selfsim::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kAssertion;
  }
}
