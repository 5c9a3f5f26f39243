#include "selfsim/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>

#include "selfsim/errors.hpp"
#include "selfsim/rng.hpp"

namespace selfsim {

Stage parse_stage(const std::string& name) {
  if (name == "dynamics") return Stage::dynamics;
  if (name == "coarse") return Stage::coarse;
  if (name == "joint_nonself") return Stage::joint_nonself;
  throw ConfigError("unknown stage '" + name + "' (expected dynamics, coarse or joint_nonself)");
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::dynamics: return "dynamics";
    case Stage::coarse: return "coarse";
    case Stage::joint_nonself: return "joint_nonself";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be positive");
  if (!(validation_fraction > 0 && validation_fraction < 1)) {
    throw ConfigError("train: validation_fraction must lie in (0, 1)");
  }
  if (restarts < 1) throw ConfigError("train: restarts must be >= 1");
  if (!(autoencode_weight >= 0)) throw ConfigError("train: autoencode_weight must be non-negative");
  if (!(target_loss >= 0)) throw ConfigError("train: target_loss must be non-negative");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"stage", to_string(cfg.stage)},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"seed", cfg.seed},
          {"validation_fraction", cfg.validation_fraction},
          {"patience", cfg.patience},
          {"log_every", cfg.log_every},
          {"restarts", cfg.restarts},
          {"target_loss", cfg.target_loss},
          {"autoencode_weight", cfg.autoencode_weight}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
  static const std::set<std::string> allowed{"stage",    "epochs",    "batch_size", "learning_rate",
                                             "seed",     "validation_fraction",     "patience",
                                             "log_every", "restarts", "target_loss", "autoencode_weight"};
  if (!doc.is_object()) throw ConfigError("train config must be a JSON object");
  std::string bad;
  for (const auto& [key, _] : doc.items()) {
    if (!allowed.contains(key)) bad += (bad.empty() ? "" : ", ") + key;
  }
  if (!bad.empty()) throw ConfigError("train config has unknown keys: " + bad);
  TrainConfig cfg;
  try {
    if (doc.contains("stage")) cfg.stage = parse_stage(doc.at("stage").get<std::string>());
    cfg.epochs = doc.value("epochs", cfg.epochs);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.learning_rate = doc.value("learning_rate", cfg.learning_rate);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.validation_fraction = doc.value("validation_fraction", cfg.validation_fraction);
    cfg.patience = doc.value("patience", cfg.patience);
    cfg.log_every = doc.value("log_every", cfg.log_every);
    cfg.restarts = doc.value("restarts", cfg.restarts);
    cfg.target_loss = doc.value("target_loss", cfg.target_loss);
    cfg.autoencode_weight = doc.value("autoencode_weight", cfg.autoencode_weight);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const TrainReport& r) {
  const auto finite_or_null = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  return {{"stage", to_string(r.stage)},
          {"epochs_run", r.epochs_run()},
          {"initial_val_loss", finite_or_null(r.initial_val_loss)},
          {"best_val_loss", finite_or_null(r.best_val_loss)},
          {"best_epoch", r.best_epoch},
          {"final_train_loss", r.train_loss.empty() ? nlohmann::json(nullptr) : finite_or_null(r.train_loss.back())},
          {"final_val_loss", r.val_loss.empty() ? nlohmann::json(nullptr) : finite_or_null(r.val_loss.back())},
          {"restart", r.restart},
          {"converged", r.converged},
          {"encoder_variance", finite_or_null(r.encoder_variance)},
          {"trivial_macro", r.trivial_macro},
          {"seconds", r.seconds}};
}

void write_metrics_csv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << "epoch,train_loss,val_loss,wall_clock_s\n" << std::setprecision(17);
  for (std::size_t e = 0; e < report.epochs_run(); ++e) {
    os << e + 1 << ',' << report.train_loss[e] << ',' << report.val_loss[e] << ',' << report.wall_clock_s[e] << '\n';
  }
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_by_trajectory(std::size_t count,
                                                                                   double validation_fraction,
                                                                                   std::uint64_t seed) {
  if (count < 2) throw UsageError("need at least two trajectories to split into train and validation");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x5eed5917));
  for (std::size_t i = count - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
  auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(count)));
  n_val = std::clamp<std::size_t>(n_val, 1, count - 1);
  std::vector<std::size_t> train(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> val(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {train, val};
}

namespace {

using Clock = std::chrono::steady_clock;

struct Sample {
  std::size_t traj;
  std::size_t first;
};

// Stacks `count` frames starting at each sample's first frame into
// [batch, channels, count, axes...], or [batch, channels, axes...] when
// `frame_axis` is false (count must then be 1).
Tensor stack(const std::vector<Trajectory>& data, std::span<const Sample> samples, std::size_t offset,
             std::size_t count, bool frame_axis) {
  const Field& f0 = data[samples[0].traj][samples[0].first];
  Shape shape{samples.size(), f0.channels()};
  if (frame_axis) shape.push_back(count);
  shape.insert(shape.end(), f0.extents().begin(), f0.extents().end());
  Tensor out(shape);
  const std::size_t sites = f0.sites();
  const std::size_t per_sample = f0.channels() * count * sites;
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const Trajectory& tr = data[samples[b].traj];
    for (std::size_t c = 0; c < f0.channels(); ++c) {
      for (std::size_t t = 0; t < count; ++t) {
        const Field& f = tr[samples[b].first + offset + t];
        std::copy_n(f.values().data() + c * sites, sites, out.data() + b * per_sample + (c * count + t) * sites);
      }
    }
  }
  return out;
}

void check_congruent(const std::vector<Trajectory>& data, std::size_t min_length) {
  if (data.empty()) throw UsageError("training needs at least one trajectory");
  for (const auto& tr : data) {
    tr.validate(min_length);
    if (!tr[0].same_shape(data.front()[0])) throw DimensionError("training trajectories differ in shape");
  }
}

// Builds the scalar loss for a batch; `bound[i]` are the tape leaves of
// `stores[i]`.
using LossBuilder = std::function<ad::Var(ad::Tape&, const std::vector<BoundParams>&, std::span<const Sample>)>;

struct Problem {
  std::vector<ParamStore*> stores;
  std::function<void(Rng&)> init;
  LossBuilder loss;
  std::vector<Sample> train;
  std::vector<Sample> val;
};

double evaluate(const Problem& p, const std::vector<Sample>& samples, std::size_t batch) {
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); i += batch) {
    const std::size_t n = std::min(batch, samples.size() - i);
    ad::Tape tape;
    std::vector<BoundParams> bound;
    for (auto* s : p.stores) bound.emplace_back(tape, *s, false);
    const double l = tape.value(p.loss(tape, bound, std::span(samples).subspan(i, n))).item();
    total += l * static_cast<double>(n);
  }
  return total / static_cast<double>(samples.size());
}

TrainReport optimize(Problem& p, const TrainConfig& cfg) {
  cfg.validate();
  if (p.train.empty() || p.val.empty()) throw UsageError("training needs non-empty train and validation sets");
  const auto start = Clock::now();
  TrainReport best_report;
  std::vector<ParamStore> best_params;
  bool have_best = false;

  for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
    Rng rng(derive_seed(cfg.seed, restart));
    p.init(rng);
    std::vector<AdamState> adam(p.stores.size());
    for (auto& a : adam) a.config.learning_rate = cfg.learning_rate;

    TrainReport report;
    report.stage = cfg.stage;
    report.restart = restart;
    report.initial_val_loss = evaluate(p, p.val, cfg.batch_size);
    report.best_val_loss = report.initial_val_loss;
    std::vector<ParamStore> run_best;
    for (auto* s : p.stores) run_best.push_back(*s);

    std::vector<Sample> order = p.train;
    std::size_t since_best = 0;
    bool finite = std::isfinite(report.initial_val_loss);
    for (std::size_t epoch = 0; epoch < cfg.epochs && finite; ++epoch) {
      for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
      double train_total = 0.0;
      for (std::size_t i = 0, batch = 0; i < order.size(); i += cfg.batch_size, ++batch) {
        const std::size_t n = std::min(cfg.batch_size, order.size() - i);
        ad::Tape tape;
        std::vector<BoundParams> bound;
        for (auto* s : p.stores) bound.emplace_back(tape, *s, true);
        const ad::Var loss = p.loss(tape, bound, std::span(order).subspan(i, n));
        const double l = tape.value(loss).item();
        if (!std::isfinite(l)) {
          throw NumericError("non-finite training loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                             std::to_string(batch));
        }
        tape.backward(loss);
        for (std::size_t s = 0; s < p.stores.size(); ++s) {
          adam_step(*p.stores[s], bound[s].gradients(tape), adam[s]);
        }
        train_total += l * static_cast<double>(n);
      }
      const double train_loss = train_total / static_cast<double>(order.size());
      const double val_loss = evaluate(p, p.val, cfg.batch_size);
      report.train_loss.push_back(train_loss);
      report.val_loss.push_back(val_loss);
      report.wall_clock_s.push_back(std::chrono::duration<double>(Clock::now() - start).count());
      finite = std::isfinite(val_loss);
      if (finite && val_loss < report.best_val_loss) {
        report.best_val_loss = val_loss;
        report.best_epoch = epoch + 1;
        for (std::size_t s = 0; s < p.stores.size(); ++s) run_best[s] = *p.stores[s];
        since_best = 0;
      } else {
        ++since_best;
      }
      if (cfg.log_every > 0 && (epoch + 1) % cfg.log_every == 0) {
        std::cerr << to_string(cfg.stage) << " restart " << restart << " epoch " << epoch + 1 << " train "
                  << train_loss << " val " << val_loss << '\n';
      }
      if (cfg.patience > 0 && since_best > cfg.patience) break;
    }
    report.converged = finite && report.best_epoch > 0;
    if (!have_best || report.best_val_loss < best_report.best_val_loss) {
      best_report = std::move(report);
      best_params = std::move(run_best);
      have_best = true;
    }
    if (best_report.best_val_loss <= cfg.target_loss) break;
  }
  for (std::size_t s = 0; s < p.stores.size(); ++s) *p.stores[s] = best_params[s];
  best_report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return best_report;
}

std::vector<Sample> transitions(const std::vector<Trajectory>& data, const std::vector<std::size_t>& which) {
  std::vector<Sample> out;
  for (auto t : which) {
    for (std::size_t f = 0; f + 1 < data[t].length(); ++f) out.push_back({t, f});
  }
  return out;
}

std::vector<Sample> block_pairs(const std::vector<Trajectory>& data, const std::vector<std::size_t>& which,
                                std::size_t T) {
  std::vector<Sample> out;
  for (auto t : which) {
    for (std::size_t f = 0; f + 2 * T <= data[t].length(); f += T) out.push_back({t, f});
  }
  return out;
}

// Shared objective of the two coarse stages. `dyn` evaluates the macro
// dynamics on [batch, F_out, 1, Y...].
ad::Var coarse_loss(ad::Tape& tape, const EncoderModel& enc, const DecoderModel& dec, const BoundParams& pe,
                    const BoundParams& pd, const std::function<ad::Var(ad::Var)>& dyn, const std::vector<Trajectory>& data,
                    std::span<const Sample> batch, double autoencode_weight) {
  const std::size_t T = enc.spec().T;
  ad::Var current = tape.constant(stack(data, batch, 0, T, true));
  ad::Var next = tape.constant(stack(data, batch, T, T, true));
  ad::Var y = enc.forward(tape, pe, current);
  ad::Var predicted = dec.forward(tape, pd, dyn(y));
  ad::Var loss = ad::mse(tape, predicted, next);
  if (autoencode_weight > 0) {
    ad::Var rec = ad::mse(tape, dec.forward(tape, pd, y), current);
    loss = ad::add(tape, loss, ad::scale(tape, rec, autoencode_weight));
  }
  return loss;
}

void prepare_coarse(const std::vector<Trajectory>& data, const CoarseConfig& coarse) {
  coarse.validate();
  check_congruent(data, 2 * coarse.spec.T);
  const Field& f0 = data.front()[0];
  if (f0.channels() != coarse.micro_channels) {
    throw ConfigError("coarse model expects " + std::to_string(coarse.micro_channels) + " micro channels, data has " +
                      std::to_string(f0.channels()));
  }
  for (const auto& tr : data) {
    coarse.spec.check(f0.extents(), tr.length() - tr.length() % coarse.spec.T);
  }
}

void finish_coarse(TrainReport& report, const EncoderModel& enc, const std::vector<Trajectory>& data,
                   const std::vector<std::size_t>& val) {
  std::vector<Trajectory> held;
  for (auto v : val) held.push_back(data[v]);
  report.encoder_variance = encoder_output_variance(enc, held);
  report.trivial_macro = !(report.encoder_variance >= kTrivialVarianceThreshold);
}

}  // namespace

double encoder_output_variance(const EncoderModel& encoder, const std::vector<Trajectory>& data) {
  const std::size_t channels = encoder.config().macro_channels;
  std::vector<double> sum(channels, 0.0);
  std::vector<double> sq(channels, 0.0);
  std::size_t count = 0;
  for (const auto& tr : data) {
    const Trajectory macro = encoder.encode(tr);
    for (const auto& f : macro.frames) {
      const std::size_t sites = f.sites();
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < sites; ++i) {
          const double v = f[c * sites + i];
          sum[c] += v;
          sq[c] += v * v;
        }
      }
      count += sites;
    }
  }
  if (count == 0) return 0.0;
  double worst = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    const double mean = sum[c] / static_cast<double>(count);
    worst = std::max(worst, std::max(0.0, sq[c] / static_cast<double>(count) - mean * mean));
  }
  return worst;
}

DynamicsResult train_stage1(const std::vector<Trajectory>& data, const DynamicsConfig& model_cfg,
                            const TrainConfig& cfg) {
  check_congruent(data, 2);
  DynamicsResult result{DynamicsModel(model_cfg), {}};
  DynamicsModel& model = result.model;
  const auto [train, val] = split_by_trajectory(data.size(), cfg.validation_fraction, cfg.seed);

  Problem p;
  p.stores = {&model.params()};
  p.init = [&model](Rng& rng) { model.init(rng); };
  p.loss = [&](ad::Tape& tape, const std::vector<BoundParams>& bound, std::span<const Sample> batch) {
    ad::Var x = tape.constant(stack(data, batch, 0, 1, false));
    ad::Var y = tape.constant(stack(data, batch, 1, 1, false));
    return ad::mse(tape, model.forward(tape, bound[0], x), y);
  };
  p.train = transitions(data, train);
  p.val = transitions(data, val);
  TrainConfig c = cfg;
  c.stage = Stage::dynamics;
  result.report = optimize(p, c);
  return result;
}

CoarseResult train_stage2(const std::vector<Trajectory>& data, const DynamicsModel& dynamics,
                          const CoarseConfig& coarse, const TrainConfig& cfg) {
  prepare_coarse(data, coarse);
  if (dynamics.config().channels != coarse.macro_channels) {
    throw ConfigError("frozen dynamics has " + std::to_string(dynamics.config().channels) +
                      " channels but the macro field has " + std::to_string(coarse.macro_channels));
  }
  const ParamStore frozen = dynamics.params();
  CoarseResult result{EncoderModel(coarse), DecoderModel(coarse), {}};
  EncoderModel& enc = result.encoder;
  DecoderModel& dec = result.decoder;
  const auto [train, val] = split_by_trajectory(data.size(), cfg.validation_fraction, cfg.seed);

  Problem p;
  p.stores = {&enc.params(), &dec.params()};
  p.init = [&](Rng& rng) {
    enc.init(rng);
    dec.init(rng);
  };
  p.loss = [&](ad::Tape& tape, const std::vector<BoundParams>& bound, std::span<const Sample> batch) {
    // theta1 enters the tape as constants, so no gradient can reach it
    BoundParams theta1(tape, dynamics.params(), false);
    const auto dyn = [&](ad::Var y) { return dynamics.forward(tape, theta1, y, true); };
    return coarse_loss(tape, enc, dec, bound[0], bound[1], dyn, data, batch, cfg.autoencode_weight);
  };
  p.train = block_pairs(data, train, coarse.spec.T);
  p.val = block_pairs(data, val, coarse.spec.T);
  TrainConfig c = cfg;
  c.stage = Stage::coarse;
  result.report = optimize(p, c);
  if (!(dynamics.params() == frozen)) {
    throw InvariantError("dynamics parameters changed during coarse-graining training");
  }
  finish_coarse(result.report, enc, data, val);
  return result;
}

NonSelfResult train_non_self_similar(const std::vector<Trajectory>& data, const DynamicsConfig& macro_dynamics,
                                     const CoarseConfig& coarse, const TrainConfig& cfg) {
  prepare_coarse(data, coarse);
  if (macro_dynamics.channels != coarse.macro_channels) {
    throw ConfigError("macro dynamics channel count does not match the macro field");
  }
  NonSelfResult result{DynamicsModel(macro_dynamics), EncoderModel(coarse), DecoderModel(coarse), {}};
  DynamicsModel& fm = result.macro_dynamics;
  EncoderModel& enc = result.encoder;
  DecoderModel& dec = result.decoder;
  const auto [train, val] = split_by_trajectory(data.size(), cfg.validation_fraction, cfg.seed);

  Problem p;
  p.stores = {&enc.params(), &dec.params(), &fm.params()};
  p.init = [&](Rng& rng) {
    enc.init(rng);
    dec.init(rng);
    fm.init(rng);
  };
  p.loss = [&](ad::Tape& tape, const std::vector<BoundParams>& bound, std::span<const Sample> batch) {
    const auto dyn = [&](ad::Var y) { return fm.forward(tape, bound[2], y, true); };
    return coarse_loss(tape, enc, dec, bound[0], bound[1], dyn, data, batch, cfg.autoencode_weight);
  };
  p.train = block_pairs(data, train, coarse.spec.T);
  p.val = block_pairs(data, val, coarse.spec.T);
  TrainConfig c = cfg;
  c.stage = Stage::joint_nonself;
  result.report = optimize(p, c);
  finish_coarse(result.report, enc, data, val);
  return result;
}

}  // namespace selfsim
