#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfsim/field.hpp"
#include "selfsim/models.hpp"
#include "selfsim/params.hpp"

namespace selfsim {

enum class Stage { dynamics, coarse, joint_nonself };

Stage parse_stage(const std::string& name);
std::string to_string(Stage stage);

struct TrainConfig {
  Stage stage = Stage::dynamics;
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;
  /// Stop after this many epochs without a new best validation loss.
  std::size_t patience = 50;
  /// Print a progress line every this many epochs (0 = silent).
  std::size_t log_every = 0;
  /// Independent initializations; the one with the lowest best validation
  /// loss is kept.
  std::size_t restarts = 1;
  /// Later restarts are skipped once a best validation loss <= target_loss
  /// is reached (0 = always run every restart).
  double target_loss = 0.0;
  /// Weight of the current-block reconstruction term in the coarse stages.
  double autoencode_weight = 1.0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& doc);

struct TrainReport {
  Stage stage = Stage::dynamics;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  /// Cumulative seconds at the end of each epoch.
  std::vector<double> wall_clock_s;
  double initial_val_loss = 0.0;
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
  std::size_t restart = 0;
  /// Finite losses and a best validation loss below the untrained one.
  bool converged = false;
  /// Coarse stages: largest per-channel variance of the encoder output over
  /// the validation blocks, and whether it fell below the trivial threshold.
  double encoder_variance = 0.0;
  bool trivial_macro = false;
  double seconds = 0.0;

  std::size_t epochs_run() const noexcept { return val_loss.size(); }
};

nlohmann::json to_json(const TrainReport& report);
void write_metrics_csv(const TrainReport& report, const std::filesystem::path& path);

inline constexpr double kTrivialVarianceThreshold = 1e-6;

struct DynamicsResult {
  DynamicsModel model;
  TrainReport report;
};

/// Fits theta1 to micro transitions x_t -> x_{t+1}, minimizing the mean
/// squared next-step error. Validation uses whole held-out trajectories.
DynamicsResult train_stage1(const std::vector<Trajectory>& data, const DynamicsConfig& model,
                            const TrainConfig& cfg);

struct CoarseResult {
  EncoderModel encoder;
  DecoderModel decoder;
  TrainReport report;
};

/// Fits theta2, theta3 with theta1 frozen. A sample is a pair of consecutive
/// aligned blocks (X_t, X_{t+1}) of T frames each; the loss is
///   |X_{t+1} - P'(f(P(X_t)))|^2 + w |X_t - P'(P(X_t))|^2.
/// Throws InvariantError if theta1 differs bitwise afterwards.
CoarseResult train_stage2(const std::vector<Trajectory>& data, const DynamicsModel& dynamics,
                          const CoarseConfig& coarse, const TrainConfig& cfg);

struct NonSelfResult {
  DynamicsModel macro_dynamics;
  EncoderModel encoder;
  DecoderModel decoder;
  TrainReport report;
};

/// Same objective as train_stage2 but the macro dynamics has its own
/// parameters, initialized from the seed and trained jointly.
NonSelfResult train_non_self_similar(const std::vector<Trajectory>& data, const DynamicsConfig& macro_dynamics,
                                     const CoarseConfig& coarse, const TrainConfig& cfg);

/// Largest per-channel variance of the encoder output over every aligned
/// block of the given trajectories.
double encoder_output_variance(const EncoderModel& encoder, const std::vector<Trajectory>& data);

/// Deterministic 80/20-style split of trajectory indices: (train, validation).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_by_trajectory(std::size_t count,
                                                                                   double validation_fraction,
                                                                                   std::uint64_t seed);

}  // namespace selfsim
