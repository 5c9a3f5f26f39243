#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfsim/field.hpp"
#include "selfsim/ops.hpp"
#include "selfsim/params.hpp"
#include "selfsim/tape.hpp"

namespace selfsim {

class Rng;

/// Spatial factor S per axis, temporal factor T, lattice dimensionality d.
struct CoarseGrainSpec {
  std::size_t S = 2;
  std::size_t T = 2;
  std::size_t d = 1;

  /// S >= 1 (S == 1 is the identity coarse-graining), T >= 1, d in {1, 2}.
  void validate() const;
  /// Throws ConfigError naming the offending extent when S does not divide
  /// every lattice extent or T does not divide the frame count.
  void check(const std::vector<std::size_t>& extents, std::size_t frames) const;

  friend bool operator==(const CoarseGrainSpec&, const CoarseGrainSpec&) = default;
};

enum class OutputMode { direct, residual };

OutputMode parse_output_mode(const std::string& name);
std::string to_string(OutputMode mode);

struct DynamicsConfig {
  std::vector<std::size_t> kernel{3};
  std::size_t channels = 1;
  /// 0 means a single convolution straight to the output channels.
  std::size_t hidden = 8;
  Activation activation = Activation::sigmoid;
  Activation output_activation = Activation::sigmoid;
  OutputMode output_mode = OutputMode::direct;

  void validate() const;
};

/// Translation-invariant next-state learner f(x; theta1).
///
/// With hidden channels: conv(kernel) -> activation -> per-site affine ->
/// output activation. The same parameters apply to any lattice extent at
/// least as large as the kernel.
class DynamicsModel {
 public:
  DynamicsModel() : DynamicsModel(DynamicsConfig{}) {}
  explicit DynamicsModel(DynamicsConfig cfg);

  const DynamicsConfig& config() const noexcept { return cfg_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  void init(Rng& rng);

  /// `x` is `[batch, channels, axes...]`, or `[batch, channels, frames,
  /// axes...]` with `frame_axis`, in which case every frame advances
  /// independently.
  ad::Var forward(ad::Tape& tape, const BoundParams& p, ad::Var x, bool frame_axis = false) const;
  Tensor predict(const Tensor& x, bool frame_axis = false) const;
  Field step(const Field& state) const;

 private:
  void check_input(const Shape& shape, bool frame_axis) const;

  DynamicsConfig cfg_;
  ParamStore params_;
};

struct CoarseConfig {
  CoarseGrainSpec spec;
  std::size_t micro_channels = 1;
  std::size_t macro_channels = 1;
  /// Encoder output activation; the decoder is always affine.
  Activation activation = Activation::sigmoid;

  void validate() const;
};

/// Coarse-graining P(theta2): one linear kernel over each disjoint
/// S^d x T x F_in block plus bias, then the output activation.
class EncoderModel {
 public:
  EncoderModel() : EncoderModel(CoarseConfig{}) {}
  explicit EncoderModel(CoarseConfig cfg);

  const CoarseConfig& config() const noexcept { return cfg_; }
  const CoarseGrainSpec& spec() const noexcept { return cfg_.spec; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  void init(Rng& rng);
  /// Weights 1 / (S^d T) on the matching channel, zero bias.
  void set_uniform_average();

  /// `[batch, F_in, T * M, X...]` -> `[batch, F_out, M, X / S...]`
  ad::Var forward(ad::Tape& tape, const BoundParams& p, ad::Var block) const;
  Tensor encode(const Tensor& block) const;
  /// Macro trajectory with one frame per T micro frames.
  Trajectory encode(const Trajectory& micro) const;
  Field encode_block(const Trajectory& micro, std::size_t first_frame) const;

 private:
  CoarseConfig cfg_;
  ParamStore params_;
};

/// P'(theta3): each macro cell expands into its own S^d x T x F_in block.
class DecoderModel {
 public:
  DecoderModel() : DecoderModel(CoarseConfig{}) {}
  explicit DecoderModel(CoarseConfig cfg);

  const CoarseConfig& config() const noexcept { return cfg_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  void init(Rng& rng);

  /// `[batch, F_out, M, Y...]` -> `[batch, F_in, T * M, Y * S...]`
  ad::Var forward(ad::Tape& tape, const BoundParams& p, ad::Var macro) const;
  Tensor decode(const Tensor& macro) const;
  Trajectory decode(const Field& macro) const;

 private:
  CoarseConfig cfg_;
  ParamStore params_;
};

// Model config documents:
//   {"kind": "dynamics", "kernel": [k...], "channels": F, "hidden": H,
//    "activation": a, "output_activation": a, "output_mode": "direct"|"residual"}
//   {"kind": "coarse", "channels": F_in, "macro_channels": F_out,
//    "activation": a, "coarse": {"S": s, "T": t, "d": d}}
// Unknown keys are rejected with ConfigError.

nlohmann::json to_json(const DynamicsConfig& cfg);
DynamicsConfig dynamics_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const CoarseConfig& cfg);
CoarseConfig coarse_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const CoarseGrainSpec& spec);
CoarseGrainSpec coarse_spec_from_json(const nlohmann::json& doc);

}  // namespace selfsim
