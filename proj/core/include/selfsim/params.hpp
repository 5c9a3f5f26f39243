#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfsim/tape.hpp"
#include "selfsim/tensor.hpp"

namespace selfsim {

class Rng;

/// Named learnable tensors of one model (dynamics, encoder or decoder).
///
/// Names iterate in lexicographic order, which fixes the order of every
/// optimizer update and serialized document.
class ParamStore {
 public:
  ParamStore() = default;

  void set(const std::string& name, Tensor value);
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return tensors_.contains(name); }
  std::vector<std::string> names() const;
  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t scalar_count() const;

  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  /// Fills every tensor with independent draws from U[-half_width, half_width].
  void init_uniform(Rng& rng, double half_width = 0.5);

  friend bool operator==(const ParamStore& a, const ParamStore& b) = default;

 private:
  std::map<std::string, Tensor> tensors_;
};

/// `{name: {"shape": [...], "values": [...]}}`, values row-major. Doubles are
/// written with round-trip precision so load(save(p)) == p bitwise.
nlohmann::json to_json(const ParamStore& params);
ParamStore params_from_json(const nlohmann::json& doc);
void save_params(const ParamStore& params, const std::filesystem::path& path);
ParamStore load_params(const std::filesystem::path& path);

/// Tape leaves for a ParamStore. Trainable stores become parameters, frozen
/// ones constants (no gradient flows into them).
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, const ParamStore& params, bool trainable);
  /// Uses existing nodes, e.g. views into one flat leaf for gradient checks.
  explicit BoundParams(std::map<std::string, ad::Var> vars) : vars_(std::move(vars)) {}

  ad::Var operator[](const std::string& name) const;
  std::map<std::string, Tensor> gradients(const ad::Tape& tape) const;

 private:
  std::map<std::string, ad::Var> vars_;
};

using GradMap = std::map<std::string, Tensor>;

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

/// One bias-corrected Adam update. Moments start at zero on first use of a
/// name. Throws NumericError naming the parameter if a gradient is not finite,
/// before anything is modified.
void adam_step(ParamStore& params, const GradMap& grads, AdamState& state);

}  // namespace selfsim
