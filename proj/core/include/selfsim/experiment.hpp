#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfsim/diffusion.hpp"
#include "selfsim/models.hpp"
#include "selfsim/trainer.hpp"
#include "selfsim/vicsek.hpp"

namespace selfsim {

struct CaSystem {
  std::vector<int> rules;
  std::size_t stage1_lattice = 64;
  std::size_t stage1_trajectories = 200;
  std::size_t stage1_steps = 10;
  std::size_t lattice = 48;
  std::size_t trajectories = 400;
  std::size_t frames = 48;
  std::size_t eval_trajectories = 50;
};

struct DiffusionDataset {
  std::string id;
  /// "analytic" or "fd"
  std::string source = "analytic";
  double dt = 1.0;
};

struct DiffusionSystem {
  DiffusionConfig base;
  std::vector<DiffusionDataset> datasets;
  std::size_t trajectories = 40;
  std::size_t frames = 100;
  std::size_t eval_trajectories = 10;
};

struct VicsekSystem {
  VicsekConfig base;
  std::vector<double> etas;
  std::size_t trajectories = 8;
  std::size_t warmup = 200;
  std::size_t frames = 40;
  std::size_t eval_trajectories = 3;
};

enum class SystemKind { ca, diffusion, vicsek };

struct ExperimentConfig {
  std::string name;
  SystemKind kind = SystemKind::ca;
  CaSystem ca;
  DiffusionSystem diffusion;
  VicsekSystem vicsek;

  DynamicsConfig dynamics;
  /// Encoder/decoder template; S and T come from each candidate.
  CoarseConfig coarse;
  std::vector<CoarseGrainSpec> candidates;
  TrainConfig stage1;
  TrainConfig stage2;
  /// Also train the non-self-similar baseline for every candidate.
  bool baseline = false;
  std::vector<std::uint64_t> seeds;

  double threshold = 0.01;
  bool binarize_macro = false;
  nlohmann::json assertions = nlohmann::json::array();
  std::string output_dir;

  /// Canonical document the hash is computed from (output_dir excluded).
  nlohmann::json canonical() const;
  std::string hash() const;
};

/// Parses and validates. All problems found are reported together in one
/// ConfigError, each prefixed with the offending key path.
ExperimentConfig experiment_from_json(const nlohmann::json& doc);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// 64-bit FNV-1a of the compact dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& canonical);

enum class StopAfter { simulate, dynamics, coarse, analyze };

struct RunOptions {
  StopAfter stop_after = StopAfter::analyze;
  std::size_t jobs = 1;
  bool verbose = false;
};

struct RunResult {
  std::filesystem::path directory;
  std::size_t stages_run = 0;
  std::size_t stages_skipped = 0;
  std::vector<std::string> failed;
};

/// simulate -> stage 1 -> stage 2 per candidate (and baseline) -> analyze,
/// for every (system variant, seed) cell, then aggregates CSVs. Completed
/// stages recorded in the manifest under the same config hash are skipped.
RunResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& run_dir,
                         const RunOptions& options = {});

struct ReportResult {
  std::string summary;
  std::vector<std::string> missing;
  std::vector<std::string> failed_assertions;
  std::size_t assertions = 0;
  bool ok() const noexcept { return missing.empty() && failed_assertions.empty(); }
};

/// Reads a run directory, rewrites the aggregated CSVs and summary.txt and
/// checks the config's assertions.
ReportResult report(const std::filesystem::path& run_dir);

/// Run directory for a config: explicit override, else the config's
/// output_dir, else $SELFSIM_OUTPUT_ROOT/<name>, else runs/<name>.
std::filesystem::path resolve_run_dir(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out);

std::string tool_version();

}  // namespace selfsim
