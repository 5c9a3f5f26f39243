#include "selfsim/models.hpp"

#include <set>

#include "selfsim/errors.hpp"
#include "selfsim/rng.hpp"

namespace selfsim {

namespace {

std::size_t pow_size(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < exp; ++i) r *= base;
  return r;
}

void reject_unknown_keys(const nlohmann::json& doc, const std::set<std::string>& allowed, const char* what) {
  if (!doc.is_object()) throw ConfigError(std::string(what) + " config must be a JSON object");
  std::string bad;
  for (const auto& [key, _] : doc.items()) {
    if (!allowed.contains(key)) bad += (bad.empty() ? "" : ", ") + key;
  }
  if (!bad.empty()) throw ConfigError(std::string(what) + " config has unknown keys: " + bad);
}

Shape with_frame_axis(const Shape& kernel) {
  Shape s{kernel[0], kernel[1], 1};
  s.insert(s.end(), kernel.begin() + 2, kernel.end());
  return s;
}

}  // namespace

void CoarseGrainSpec::validate() const {
  if (S < 1 || T < 1) throw ConfigError("coarse-graining needs S >= 1 and T >= 1");
  if (d < 1 || d > 2) throw ConfigError("coarse-graining supports d = 1 or 2, got " + std::to_string(d));
}

void CoarseGrainSpec::check(const std::vector<std::size_t>& extents, std::size_t frames) const {
  validate();
  if (extents.size() != d) {
    throw ConfigError("coarse-graining for d = " + std::to_string(d) + " applied to a " +
                      std::to_string(extents.size()) + "D lattice");
  }
  for (std::size_t a = 0; a < extents.size(); ++a) {
    if (extents[a] % S != 0) {
      throw ConfigError("S = " + std::to_string(S) + " does not divide lattice extent " +
                        std::to_string(extents[a]) + " (axis " + std::to_string(a) + ")");
    }
  }
  if (frames % T != 0) {
    throw ConfigError("T = " + std::to_string(T) + " does not divide frame count " + std::to_string(frames));
  }
}

OutputMode parse_output_mode(const std::string& name) {
  if (name == "direct") return OutputMode::direct;
  if (name == "residual") return OutputMode::residual;
  throw ConfigError("unknown output_mode '" + name + "' (expected direct or residual)");
}

std::string to_string(OutputMode mode) { return mode == OutputMode::direct ? "direct" : "residual"; }

void DynamicsConfig::validate() const {
  if (kernel.empty() || kernel.size() > 2) throw ConfigError("dynamics kernel must have 1 or 2 axes");
  for (auto k : kernel) {
    if (k == 0) throw ConfigError("dynamics kernel extents must be positive");
  }
  if (channels == 0) throw ConfigError("dynamics needs at least one channel");
}

DynamicsModel::DynamicsModel(DynamicsConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Shape k{cfg_.hidden > 0 ? cfg_.hidden : cfg_.channels, cfg_.channels};
  k.insert(k.end(), cfg_.kernel.begin(), cfg_.kernel.end());
  params_.set("conv.weight", Tensor(k));
  params_.set("conv.bias", Tensor({k[0]}));
  if (cfg_.hidden > 0) {
    params_.set("mix.weight", Tensor({cfg_.hidden, cfg_.channels}));
    params_.set("mix.bias", Tensor({cfg_.channels}));
  }
}

void DynamicsModel::init(Rng& rng) { params_.init_uniform(rng); }

void DynamicsModel::check_input(const Shape& shape, bool frame_axis) const {
  const std::size_t axes = cfg_.kernel.size();
  const std::size_t rank = 2 + axes + (frame_axis ? 1 : 0);
  if (shape.size() != rank) {
    throw DimensionError("dynamics expects rank " + std::to_string(rank) + " input, got " + selfsim::to_string(shape));
  }
  if (shape[1] != cfg_.channels) {
    throw DimensionError("dynamics has " + std::to_string(cfg_.channels) + " channels, input " +
                      selfsim::to_string(shape) + " has " + std::to_string(shape[1]));
  }
  for (std::size_t a = 0; a < axes; ++a) {
    if (shape[rank - axes + a] < cfg_.kernel[a]) {
      throw DimensionError("lattice " + selfsim::to_string(shape) + " smaller than dynamics kernel");
    }
  }
}

ad::Var DynamicsModel::forward(ad::Tape& tape, const BoundParams& p, ad::Var x, bool frame_axis) const {
  check_input(tape.value(x).shape(), frame_axis);
  ad::Var kernel = p["conv.weight"];
  if (frame_axis) kernel = ad::reshape(tape, kernel, with_frame_axis(tape.value(kernel).shape()));
  const std::size_t axes = tape.value(kernel).rank() - 2;
  ad::Var h = ad::conv_circular(tape, x, kernel, std::vector<std::size_t>(axes, 1));
  h = ad::add_channel_bias(tape, h, p["conv.bias"]);
  if (cfg_.hidden > 0) {
    h = ad::activation(tape, h, cfg_.activation);
    h = ad::affine(tape, h, p["mix.weight"], p["mix.bias"]);
  }
  h = ad::activation(tape, h, cfg_.output_activation);
  if (cfg_.output_mode == OutputMode::residual) h = ad::add(tape, x, h);
  return h;
}

Tensor DynamicsModel::predict(const Tensor& x, bool frame_axis) const {
  ad::Tape tape;
  BoundParams p(tape, params_, false);
  return tape.value(forward(tape, p, tape.constant(x), frame_axis));
}

Field DynamicsModel::step(const Field& state) const { return Field::from_tensor(predict(state.as_batch())); }

void CoarseConfig::validate() const {
  spec.validate();
  if (micro_channels == 0 || macro_channels == 0) throw ConfigError("coarse-graining needs positive channel counts");
}

EncoderModel::EncoderModel(CoarseConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Shape k{cfg_.macro_channels, cfg_.micro_channels, cfg_.spec.T};
  for (std::size_t a = 0; a < cfg_.spec.d; ++a) k.push_back(cfg_.spec.S);
  params_.set("weight", Tensor(k));
  params_.set("bias", Tensor({cfg_.macro_channels}));
}

void EncoderModel::init(Rng& rng) { params_.init_uniform(rng); }

void EncoderModel::set_uniform_average() {
  Tensor& w = params_.at("weight");
  w.fill(0.0);
  const std::size_t block = cfg_.spec.T * pow_size(cfg_.spec.S, cfg_.spec.d);
  const double v = 1.0 / static_cast<double>(block);
  for (std::size_t o = 0; o < cfg_.macro_channels; ++o) {
    if (o >= cfg_.micro_channels) break;
    double* dst = w.data() + (o * cfg_.micro_channels + o) * block;
    for (std::size_t j = 0; j < block; ++j) dst[j] = v;
  }
  params_.at("bias").fill(0.0);
}

ad::Var EncoderModel::forward(ad::Tape& tape, const BoundParams& p, ad::Var block) const {
  const auto& s = tape.value(block).shape();
  if (s.size() != 3 + cfg_.spec.d) {
    throw DimensionError("encoder expects [batch, channels, frames, " + std::to_string(cfg_.spec.d) +
                         " axes], got " + selfsim::to_string(s));
  }
  if (s[1] != cfg_.micro_channels) {
    throw DimensionError("encoder has " + std::to_string(cfg_.micro_channels) + " input channels, block has " +
                      std::to_string(s[1]));
  }
  cfg_.spec.check(std::vector<std::size_t>(s.begin() + 3, s.end()), s[2]);
  std::vector<std::size_t> stride{cfg_.spec.T};
  for (std::size_t a = 0; a < cfg_.spec.d; ++a) stride.push_back(cfg_.spec.S);
  ad::Var y = ad::conv_circular(tape, block, p["weight"], stride);
  y = ad::add_channel_bias(tape, y, p["bias"]);
  return ad::activation(tape, y, cfg_.activation);
}

Tensor EncoderModel::encode(const Tensor& block) const {
  ad::Tape tape;
  BoundParams p(tape, params_, false);
  return tape.value(forward(tape, p, tape.constant(block)));
}

Trajectory EncoderModel::encode(const Trajectory& micro) const {
  micro.validate(1);
  const std::size_t usable = micro.length() - micro.length() % cfg_.spec.T;
  if (usable == 0) throw ConfigError("trajectory shorter than T = " + std::to_string(cfg_.spec.T));
  const Tensor y = encode(micro.block(0, usable));
  return Trajectory::from_block(y, micro.dt * static_cast<double>(cfg_.spec.T), Scale::macro);
}

Field EncoderModel::encode_block(const Trajectory& micro, std::size_t first_frame) const {
  const Tensor y = encode(micro.block(first_frame, cfg_.spec.T));
  return Trajectory::from_block(y, 1.0, Scale::macro).frames.front();
}

DecoderModel::DecoderModel(CoarseConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Shape k{cfg_.macro_channels, cfg_.micro_channels, cfg_.spec.T};
  for (std::size_t a = 0; a < cfg_.spec.d; ++a) k.push_back(cfg_.spec.S);
  params_.set("weight", Tensor(k));
  Shape b(k.begin() + 1, k.end());
  params_.set("bias", Tensor(b));
}

void DecoderModel::init(Rng& rng) { params_.init_uniform(rng); }

ad::Var DecoderModel::forward(ad::Tape& tape, const BoundParams& p, ad::Var macro) const {
  const auto& s = tape.value(macro).shape();
  if (s.size() != 3 + cfg_.spec.d) {
    throw DimensionError("decoder expects [batch, channels, frames, " + std::to_string(cfg_.spec.d) +
                         " axes], got " + selfsim::to_string(s));
  }
  if (s[1] != cfg_.macro_channels) {
    throw DimensionError("decoder has " + std::to_string(cfg_.macro_channels) + " macro channels, input has " +
                      std::to_string(s[1]));
  }
  return ad::block_expand(tape, macro, p["weight"], p["bias"]);
}

Tensor DecoderModel::decode(const Tensor& macro) const {
  ad::Tape tape;
  BoundParams p(tape, params_, false);
  return tape.value(forward(tape, p, tape.constant(macro)));
}

Trajectory DecoderModel::decode(const Field& macro) const {
  Shape s{1, macro.channels(), 1};
  s.insert(s.end(), macro.extents().begin(), macro.extents().end());
  const Tensor out = decode(Tensor(s, std::vector<double>(macro.values().begin(), macro.values().end())));
  return Trajectory::from_block(out, 1.0, Scale::micro);
}

nlohmann::json to_json(const CoarseGrainSpec& spec) { return {{"S", spec.S}, {"T", spec.T}, {"d", spec.d}}; }

CoarseGrainSpec coarse_spec_from_json(const nlohmann::json& doc) {
  reject_unknown_keys(doc, {"S", "T", "d"}, "coarse");
  CoarseGrainSpec spec;
  spec.S = doc.value("S", spec.S);
  spec.T = doc.value("T", spec.T);
  spec.d = doc.value("d", spec.d);
  spec.validate();
  return spec;
}

nlohmann::json to_json(const DynamicsConfig& cfg) {
  return {{"kind", "dynamics"},
          {"kernel", cfg.kernel},
          {"channels", cfg.channels},
          {"hidden", cfg.hidden},
          {"activation", std::string(to_string(cfg.activation))},
          {"output_activation", std::string(to_string(cfg.output_activation))},
          {"output_mode", to_string(cfg.output_mode)}};
}

DynamicsConfig dynamics_config_from_json(const nlohmann::json& doc) {
  reject_unknown_keys(doc, {"kind", "kernel", "channels", "hidden", "activation", "output_activation", "output_mode"},
                      "dynamics");
  if (doc.value("kind", std::string("dynamics")) != "dynamics") throw ConfigError("expected kind 'dynamics'");
  DynamicsConfig cfg;
  try {
    if (doc.contains("kernel")) {
      const auto& k = doc.at("kernel");
      cfg.kernel = k.is_array() ? k.get<std::vector<std::size_t>>() : std::vector<std::size_t>{k.get<std::size_t>()};
    }
    cfg.channels = doc.value("channels", cfg.channels);
    cfg.hidden = doc.value("hidden", cfg.hidden);
    if (doc.contains("activation")) cfg.activation = parse_activation(doc.at("activation").get<std::string>());
    if (doc.contains("output_activation")) {
      cfg.output_activation = parse_activation(doc.at("output_activation").get<std::string>());
    }
    if (doc.contains("output_mode")) cfg.output_mode = parse_output_mode(doc.at("output_mode").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dynamics config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const CoarseConfig& cfg) {
  return {{"kind", "coarse"},
          {"channels", cfg.micro_channels},
          {"macro_channels", cfg.macro_channels},
          {"activation", std::string(to_string(cfg.activation))},
          {"coarse", to_json(cfg.spec)}};
}

CoarseConfig coarse_config_from_json(const nlohmann::json& doc) {
  reject_unknown_keys(doc, {"kind", "channels", "macro_channels", "activation", "coarse"}, "coarse");
  if (doc.value("kind", std::string("coarse")) != "coarse") throw ConfigError("expected kind 'coarse'");
  CoarseConfig cfg;
  try {
    cfg.micro_channels = doc.value("channels", cfg.micro_channels);
    cfg.macro_channels = doc.value("macro_channels", cfg.micro_channels);
    if (doc.contains("activation")) cfg.activation = parse_activation(doc.at("activation").get<std::string>());
    if (doc.contains("coarse")) cfg.spec = coarse_spec_from_json(doc.at("coarse"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("coarse config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace selfsim
