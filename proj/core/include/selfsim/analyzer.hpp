#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "selfsim/ca.hpp"
#include "selfsim/field.hpp"
#include "selfsim/models.hpp"

namespace selfsim {

struct ConsistencyOptions {
  /// Threshold macro states at 0.5 before evolving and comparing (binary
  /// systems). The dynamics output itself stays continuous.
  bool binarize_macro = false;
};

/// Mean over macro times and cells of (f(P(X_tau)) - P(X_{tau+1}))^2 with
/// blocks aligned to multiples of T. Needs at least 2T frames.
double consistency(const Trajectory& micro, const DynamicsModel& dynamics, const EncoderModel& encoder,
                   const ConsistencyOptions& options = {});
/// Pooled over several trajectories (each contributes all its cells).
double consistency(const std::vector<Trajectory>& micro, const DynamicsModel& dynamics,
                   const EncoderModel& encoder, const ConsistencyOptions& options = {});

enum class Verdict { self_similar, not_self_similar, trivial_macro };

std::string to_string(Verdict v);

/// value < threshold and not trivial -> self_similar. A trivial macro state
/// wins regardless of the value. Throws ConfigError for threshold <= 0.
Verdict classify_self_similar(double value, bool trivial_macro, double threshold = 0.01);

struct ConsistencyRow {
  std::string system_id;
  std::size_t S = 0;
  std::size_t T = 0;
  double consistency = 0.0;
  bool trivial_macro = false;
  Verdict verdict = Verdict::not_self_similar;
};

struct ConsistencyReport {
  double threshold = 0.01;
  std::vector<ConsistencyRow> rows;

  void add(std::string system_id, std::size_t S, std::size_t T, double value, bool trivial);
};

void write_consistency_csv(const ConsistencyReport& report, const std::filesystem::path& path);

struct MacroPattern {
  Trajectory macro;
  /// 0.5-thresholded copy, present when requested.
  std::optional<Trajectory> binary;
};

MacroPattern macro_pattern(const Trajectory& micro, const EncoderModel& encoder, bool binarize);

/// Fraction of cells of frames 1.. that equal the rule applied to the
/// previous frame. The trajectory must be binary.
double rule_agreement(const Trajectory& binary, const CARule& rule);

struct ScalingFit {
  std::string quantity;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

ScalingFit linear_fit(const std::vector<double>& x, const std::vector<double>& y, std::string quantity = {});

struct MsdOptions {
  /// Lattice spacing and frame spacing used to convert to micro units
  /// (S and T for a macro trajectory).
  double spatial_scale = 1.0;
  double time_scale = 1.0;
  /// Subtracted from every value before normalizing; for learned macro
  /// fields the encoder's response to an all-zero block.
  double baseline = 0.0;
  /// First and one-past-last frame used in the fit (end 0 = all).
  std::size_t first_frame = 1;
  std::size_t end_frame = 0;
  std::string quantity = "msd_vs_t_micro";
};

/// Spatial variance of each normalized profile around the circular centre
/// of mass, fitted linearly against time. Frames whose corrected mass is
/// negative are sign-flipped. Throws DomainError for a frame with zero mass.
ScalingFit msd_slope(const Trajectory& traj, const MsdOptions& options = {});
std::vector<double> profile_variance(const Trajectory& traj, const MsdOptions& options = {});

void write_scaling_csv(const std::vector<ScalingFit>& fits, const std::filesystem::path& path);

/// Per-transition next-step MSE of the dynamics on a micro trajectory.
std::vector<double> dynamics_errors(const Trajectory& micro, const DynamicsModel& dynamics);

/// Per aligned block pair: MSE of X_{t+1} against P'(f(P(X_t))).
std::vector<double> reconstruction_errors(const Trajectory& micro, const DynamicsModel& dynamics,
                                          const EncoderModel& encoder, const DecoderModel& decoder);

struct BoxStats {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

/// Linear-interpolated quartiles. Throws UsageError on empty input.
BoxStats box_stats(std::vector<double> values);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct EtaRun {
  double eta = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> order_parameter;
  std::vector<double> dynamics_mse;
  std::vector<double> reconstruction_mse;
  bool converged = true;
};

struct EtaRow {
  double eta = 0.0;
  double phi_mean = 0.0;
  double phi_std = 0.0;
  BoxStats dynamics;
  BoxStats reconstruction;
  std::size_t runs = 0;
  std::size_t excluded = 0;
  bool converged = true;
};

/// Groups runs by eta (ascending). Non-converged runs are excluded from the
/// statistics and flag their row. phi statistics are over per-run means.
std::vector<EtaRow> eta_scan(const std::vector<EtaRun>& runs);

void write_eta_scan_csv(const std::vector<EtaRow>& rows, const std::filesystem::path& path);

}  // namespace selfsim
