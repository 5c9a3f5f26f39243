#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "selfsim/analyzer.hpp"
#include "selfsim/ca.hpp"
#include "selfsim/errors.hpp"
#include "selfsim/rng.hpp"
#include "selfsim/trainer.hpp"

using namespace selfsim;

namespace {

std::vector<Trajectory> ca_data(int rule, std::size_t count, std::size_t sites, std::size_t steps, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(eca_run(CARule(rule), random_binary_field(sites, rng), steps));
  return out;
}

double accuracy(const DynamicsModel& m, const std::vector<Trajectory>& data) {
  std::size_t hit = 0;
  std::size_t total = 0;
  for (const auto& t : data) {
    for (std::size_t s = 0; s + 1 < t.length(); ++s) {
      const Field p = m.step(t[s]);
      for (std::size_t i = 0; i < p.sites(); ++i) {
        hit += ((p[i] > 0.5 ? 1.0 : 0.0) == t[s + 1][i]) ? 1 : 0;
        ++total;
      }
    }
  }
  return double(hit) / double(total);
}

TrainConfig fast(Stage stage, std::size_t epochs, std::uint64_t seed = 0) {
  TrainConfig c;
  c.stage = stage;
  c.epochs = epochs;
  c.batch_size = 32;
  c.learning_rate = 0.01;
  c.seed = seed;
  c.patience = epochs;
  return c;
}

CoarseConfig ca_coarse(std::size_t n) {
  CoarseConfig c;
  c.spec = {n, n, 1};
  return c;
}

void check_bookkeeping(const TrainReport& r) {
  REQUIRE(r.epochs_run() > 0);
  CHECK(r.train_loss.size() == r.val_loss.size());
  CHECK(r.wall_clock_s.size() == r.val_loss.size());
  double best = r.initial_val_loss;
  for (std::size_t e = 0; e < r.epochs_run(); ++e) {
    CHECK(r.train_loss[e] >= 0.0);
    CHECK(r.val_loss[e] >= 0.0);
    best = std::min(best, r.val_loss[e]);
    if (e > 0) CHECK(r.wall_clock_s[e] >= r.wall_clock_s[e - 1]);
  }
  CHECK(r.best_val_loss == best);
  if (r.best_epoch > 0) CHECK(r.val_loss[r.best_epoch - 1] == r.best_val_loss);
}

}  // namespace

TEST_CASE("train config documents") {
  TrainConfig c;
  c.stage = Stage::coarse;
  c.epochs = 17;
  c.learning_rate = 0.02;
  const TrainConfig back = train_config_from_json(to_json(c));
  CHECK(back.stage == Stage::coarse);
  CHECK(back.epochs == 17);
  CHECK(back.learning_rate == 0.02);
  CHECK_THROWS_AS(train_config_from_json({{"epoch", 3}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"learning_rate", -1.0}}), ConfigError);
  CHECK_THROWS_AS(parse_stage("stage3"), ConfigError);
}

TEST_CASE("trajectory split") {
  const auto [train, val] = split_by_trajectory(10, 0.2, 3);
  CHECK(train.size() == 8);
  CHECK(val.size() == 2);
  std::vector<std::size_t> all = train;
  all.insert(all.end(), val.begin(), val.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(all[i] == i);
  CHECK(split_by_trajectory(10, 0.2, 3) == split_by_trajectory(10, 0.2, 3));
  CHECK(split_by_trajectory(2, 0.01, 0).second.size() == 1);
}

TEST_CASE("stage 1 learns the identity rule") {
  const auto data = ca_data(204, 200, 64, 10, 1);
  DynamicsResult r = train_stage1(data, DynamicsConfig{}, fast(Stage::dynamics, 200));
  check_bookkeeping(r.report);
  CHECK(r.report.converged);
  CHECK(r.report.best_val_loss < 1e-6);
  CHECK(accuracy(r.model, ca_data(204, 10, 64, 4, 99)) == 1.0);
}

TEST_CASE("stage 1 reaches full accuracy on sampled rules") {
  for (int rule : {30, 60, 110, 150}) {
    CAPTURE(rule);
    const auto data = ca_data(rule, 100, 32, 10, rule);
    TrainConfig cfg = fast(Stage::dynamics, 150);
    cfg.restarts = 2;
    DynamicsResult r = train_stage1(data, DynamicsConfig{}, cfg);
    CHECK(accuracy(r.model, ca_data(rule, 20, 64, 10, 1000 + rule)) == 1.0);
  }
}

TEST_CASE("stage 1 is reproducible") {
  const auto data = ca_data(90, 20, 16, 5, 4);
  const DynamicsResult a = train_stage1(data, DynamicsConfig{}, fast(Stage::dynamics, 10, 5));
  const DynamicsResult b = train_stage1(data, DynamicsConfig{}, fast(Stage::dynamics, 10, 5));
  CHECK(a.model.params() == b.model.params());
  CHECK(a.report.train_loss == b.report.train_loss);
  CHECK(a.report.val_loss == b.report.val_loss);
  const DynamicsResult c = train_stage1(data, DynamicsConfig{}, fast(Stage::dynamics, 10, 6));
  CHECK_FALSE(a.model.params() == c.model.params());
}

TEST_CASE("restarts stop once the target loss is reached") {
  const auto data = ca_data(90, 20, 16, 5, 4);
  TrainConfig cfg = fast(Stage::dynamics, 10, 5);
  const DynamicsResult single = train_stage1(data, DynamicsConfig{}, cfg);
  cfg.restarts = 3;
  cfg.target_loss = 1e9;
  const DynamicsResult stopped = train_stage1(data, DynamicsConfig{}, cfg);
  CHECK(stopped.model.params() == single.model.params());
  CHECK(stopped.report.restart == 0);
  cfg.target_loss = 0.0;
  const DynamicsResult all = train_stage1(data, DynamicsConfig{}, cfg);
  CHECK(all.report.best_val_loss <= single.report.best_val_loss);
  cfg.target_loss = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("stage 1 input checks") {
  std::vector<Trajectory> one = ca_data(90, 1, 16, 5, 0);
  CHECK_THROWS(train_stage1(one, DynamicsConfig{}, fast(Stage::dynamics, 1)));
  std::vector<Trajectory> mixed = ca_data(90, 3, 16, 5, 0);
  mixed.push_back(ca_data(90, 1, 12, 5, 0).front());
  CHECK_THROWS_AS(train_stage1(mixed, DynamicsConfig{}, fast(Stage::dynamics, 1)), DimensionError);
}

TEST_CASE("stage 2 never touches theta1") {
  const auto micro = ca_data(60, 40, 16, 5, 2);
  DynamicsResult s1 = train_stage1(micro, DynamicsConfig{}, fast(Stage::dynamics, 30));
  const std::string before = to_json(s1.model.params()).dump();
  const ParamStore copy = s1.model.params();
  const auto data = ca_data(60, 30, 24, 11, 3);
  CoarseResult s2 = train_stage2(data, s1.model, ca_coarse(2), fast(Stage::coarse, 20));
  CHECK(to_json(s1.model.params()).dump() == before);
  CHECK(s1.model.params() == copy);
  check_bookkeeping(s2.report);
  CHECK(s2.report.encoder_variance > 0.0);

  const CoarseResult again = train_stage2(data, s1.model, ca_coarse(2), fast(Stage::coarse, 20));
  CHECK(again.encoder.params() == s2.encoder.params());
  CHECK(again.decoder.params() == s2.decoder.params());
  CHECK(again.report.val_loss == s2.report.val_loss);
}

TEST_CASE("stage 2 checks divisibility") {
  DynamicsModel dyn;
  Rng rng(0);
  dyn.init(rng);
  const auto data = ca_data(60, 4, 25, 11, 3);
  CHECK_THROWS_AS(train_stage2(data, dyn, ca_coarse(2), fast(Stage::coarse, 1)), ConfigError);
  const auto short_data = ca_data(60, 4, 24, 2, 3);
  CHECK_THROWS_AS(train_stage2(short_data, dyn, ca_coarse(2), fast(Stage::coarse, 1)), DimensionError);
}

TEST_CASE("uniform encoder on rule 0 has zero loss") {
  const auto micro = ca_data(0, 20, 16, 5, 7);
  DynamicsResult s1 = train_stage1(micro, DynamicsConfig{}, fast(Stage::dynamics, 5));
  CoarseConfig cc = ca_coarse(2);
  cc.activation = Activation::identity;
  EncoderModel enc(cc);
  enc.set_uniform_average();
  DecoderModel dec(cc);  // zero-initialized
  for (const auto& t : ca_data(0, 5, 24, 11, 8)) {
    for (double e : reconstruction_errors(t, s1.model, enc, dec)) CHECK(e == 0.0);
  }
}

TEST_CASE("rule 60 coarse-grains to itself at N = 2, rule 85 does not") {
  for (int rule : {60, 85}) {
    CAPTURE(rule);
    const auto micro = ca_data(rule, 100, 32, 10, 11);
    TrainConfig c1 = fast(Stage::dynamics, 150);
    c1.restarts = 2;
    DynamicsResult s1 = train_stage1(micro, DynamicsConfig{}, c1);
    const auto data = ca_data(rule, 100, 32, 16, 12);
    CoarseResult s2 = train_stage2(data, s1.model, ca_coarse(2), fast(Stage::coarse, 60));
    CHECK(s2.report.converged);
    ConsistencyOptions opt;
    opt.binarize_macro = true;
    const auto eval = ca_data(rule, 20, 32, 16, 13);
    const double c = consistency(eval, s1.model, s2.encoder, opt);
    if (rule == 60) {
      CHECK(c < 0.01);
      const MacroPattern pattern = macro_pattern(eval.front(), s2.encoder, true);
      CHECK(rule_agreement(*pattern.binary, CARule(60)) >= 0.99);
    } else {
      CHECK(c > 0.1);
    }
  }
}

TEST_CASE("jointly trained baseline differs from the shared-dynamics run") {
  const auto micro = ca_data(85, 40, 16, 5, 2);
  DynamicsResult s1 = train_stage1(micro, DynamicsConfig{}, fast(Stage::dynamics, 30));
  const auto data = ca_data(85, 30, 24, 11, 3);
  const CoarseResult shared = train_stage2(data, s1.model, ca_coarse(3), fast(Stage::coarse, 10));
  NonSelfResult joint = train_non_self_similar(data, DynamicsConfig{}, ca_coarse(3), fast(Stage::joint_nonself, 10));
  CHECK(joint.report.stage == Stage::joint_nonself);
  CHECK_FALSE(joint.encoder.params() == shared.encoder.params());
  CHECK_FALSE(joint.macro_dynamics.params() == s1.model.params());
  check_bookkeeping(joint.report);
}

TEST_CASE("metrics csv") {
  TrainReport r;
  r.train_loss = {0.5, 0.25};
  r.val_loss = {0.75, 0.375};
  r.wall_clock_s = {0.1, 0.2};
  const auto path = std::filesystem::temp_directory_path() / "selfsim_metrics_test.csv";
  write_metrics_csv(r, path);
  std::ifstream is(path);
  std::string header;
  std::string row;
  std::getline(is, header);
  std::getline(is, row);
  CHECK(header == "epoch,train_loss,val_loss,wall_clock_s");
  CHECK(row.rfind("1,0.5,0.75,", 0) == 0);
  std::filesystem::remove(path);
  CHECK(to_json(r).at("converged") == false);
}
