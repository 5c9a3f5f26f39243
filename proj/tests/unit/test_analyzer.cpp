#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "selfsim/analyzer.hpp"
#include "selfsim/ca.hpp"
#include "selfsim/diffusion.hpp"
#include "selfsim/errors.hpp"
#include "selfsim/rng.hpp"

using namespace selfsim;

namespace {

std::vector<Trajectory> ca_data(int rule, std::size_t count, std::size_t sites, std::size_t steps, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(eca_run(CARule(rule), random_binary_field(sites, rng), steps));
  return out;
}

CoarseConfig cfg(std::size_t S, std::size_t T, Activation a = Activation::identity) {
  CoarseConfig c;
  c.spec = {S, T, 1};
  c.activation = a;
  return c;
}

DynamicsModel identity_dynamics() {
  DynamicsConfig d;
  d.hidden = 0;
  d.output_activation = Activation::identity;
  DynamicsModel m(d);
  m.params().at("conv.weight") = Tensor({1, 1, 3}, {0, 1, 0});
  m.params().at("conv.bias").fill(0.0);
  return m;
}

// Table 1 of the reference results, frozen: rule -> consistency at N = 2, 3, 4.
const std::map<int, std::array<double, 3>> kTable1{
    {0, {0, 0, 0}},        {15, {0.5, 0, 0.5116}},  {51, {0.5, 0, 0.5116}}, {60, {0, 0.4786, 0}},
    {85, {0.5, 0, 0.4884}}, {90, {0, 0.5246, 0}},    {102, {0, 0.2990, 0}},  {128, {0, 0, 0}},
    {136, {0, 0, 0}},      {150, {0, 0.7723, 0}},    {153, {0, 0.5407, 0}},  {165, {0, 0.4911, 0}},
    {170, {0, 0, 0}},      {192, {0, 0, 0}},         {195, {0, 0.4520, 0}},  {204, {0, 0, 0}},
    {238, {0, 0, 0}},      {240, {0, 0, 0}},         {252, {0, 0, 0}},       {254, {0, 0, 0}},
    {255, {0, 0, 0}}};

}  // namespace

TEST_CASE("consistency is zero when both paths coincide") {
  const DynamicsModel id = identity_dynamics();
  EncoderModel enc(cfg(2, 2));
  enc.set_uniform_average();
  for (const auto& t : ca_data(204, 5, 16, 7, 1)) CHECK(consistency(t, id, enc) == 0.0);
}

TEST_CASE("consistency on rule 0 with a fixed-point encoder") {
  // Zero blocks map to 0, which the hand-set dynamics keeps at 0.
  const DynamicsModel id = identity_dynamics();
  Rng rng(2);
  EncoderModel enc(cfg(4, 4));
  enc.init(rng);
  enc.params().at("bias").fill(0.0);
  const auto data = ca_data(0, 3, 16, 11, 2);
  // Frame 0 is random, so drop it: from frame 1 on everything is zero.
  for (auto t : data) {
    t.frames.erase(t.frames.begin());
    t.frames.pop_back();
    t.frames.pop_back();
    t.frames.pop_back();
    REQUIRE(t.length() == 8);
    CHECK(consistency(t, id, enc) == 0.0);
  }
}

TEST_CASE("consistency is non-negative and shift invariant") {
  Rng rng(3);
  DynamicsModel dyn;
  dyn.init(rng);
  EncoderModel enc(cfg(2, 2, Activation::sigmoid));
  enc.init(rng);
  for (const auto& t : ca_data(110, 4, 24, 9, 4)) {
    const double c = consistency(t, dyn, enc);
    CHECK(c >= 0.0);
    for (std::ptrdiff_t k : {2, 4, 10, -6}) {
      const std::ptrdiff_t shift[] = {k};
      CHECK(consistency(t.rolled(shift), dyn, enc) == doctest::Approx(c).epsilon(1e-12));
    }
    ConsistencyOptions opt;
    opt.binarize_macro = true;
    CHECK(consistency(t, dyn, enc, opt) >= 0.0);
  }
  Trajectory short_traj = ca_data(110, 1, 24, 2, 5).front();
  CHECK_THROWS_AS(consistency(short_traj, dyn, enc), DimensionError);
}

TEST_CASE("verdicts") {
  CHECK(classify_self_similar(0.0, false) == Verdict::self_similar);
  CHECK(classify_self_similar(0.01, false, 0.01) == Verdict::not_self_similar);
  CHECK(classify_self_similar(0.0, true) == Verdict::trivial_macro);
  CHECK(classify_self_similar(0.9, true) == Verdict::trivial_macro);
  CHECK_THROWS_AS(classify_self_similar(0.1, false, 0.0), ConfigError);
  for (double v : {0.0, 0.001, 0.004, 0.02, 0.5}) {
    for (double hi : {0.005, 0.01, 0.1}) {
      if (classify_self_similar(v, false, hi) == Verdict::not_self_similar) {
        CHECK(classify_self_similar(v, false, hi / 2) == Verdict::not_self_similar);
      }
    }
  }
  SUBCASE("table values reproduce the bold-zero pattern") {
    for (const auto& [rule, values] : kTable1) {
      for (std::size_t n = 0; n < 3; ++n) {
        const Verdict v = classify_self_similar(values[n], false, 0.01);
        CHECK((v == Verdict::self_similar) == (values[n] == 0.0));
      }
    }
  }
}

TEST_CASE("consistency csv") {
  ConsistencyReport r;
  r.add("rule60", 2, 2, 0.0, false);
  r.add("rule60", 3, 3, 0.4786, false);
  r.add("rule0", 2, 2, 0.0, true);
  const auto path = std::filesystem::temp_directory_path() / "selfsim_consistency_test.csv";
  write_consistency_csv(r, path);
  std::ifstream is(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "system_id,S,T,consistency,verdict");
  CHECK(lines[1] == "rule60,2,2,0,self_similar");
  CHECK(lines[2] == "rule60,3,3,0.4786,not_self_similar");
  CHECK(lines[3] == "rule0,2,2,0,trivial_macro");
  std::filesystem::remove(path);
}

TEST_CASE("macro patterns") {
  Rng rng(6);
  EncoderModel enc(cfg(2, 2, Activation::sigmoid));
  enc.init(rng);
  const Trajectory zeros = ca_data(0, 1, 16, 8, 7).front();
  Trajectory tail = zeros;
  tail.frames.erase(tail.frames.begin(), tail.frames.begin() + 2);
  const MacroPattern p = macro_pattern(tail, enc, true);
  REQUIRE(p.binary.has_value());
  const double first = p.macro[0][0];
  for (const auto& f : p.macro.frames) {
    for (double v : f.values()) CHECK(v == first);
  }

  EncoderModel id(cfg(1, 1));
  id.params().at("weight").fill(1.0);
  const Trajectory t = ca_data(30, 1, 16, 5, 8).front();
  const MacroPattern same = macro_pattern(t, id, true);
  CHECK(same.macro.frames == t.frames);
  CHECK(rule_agreement(*same.binary, CARule(30)) == 1.0);
  CHECK(rule_agreement(*same.binary, CARule(90)) < 1.0);
  CHECK_FALSE(macro_pattern(t, id, false).binary.has_value());
}

TEST_CASE("msd slopes") {
  DiffusionConfig c;
  c.D = 1.0;
  c.dt = 0.01;
  Field delta({100}, 1);
  delta[50] = 1.0;
  const Trajectory analytic = diffusion_run_analytic(delta, c, 21);
  const ScalingFit a = msd_slope(analytic);
  CHECK(a.slope == doctest::Approx(2.0).epsilon(0.01));
  CHECK(a.r2 > 0.999);
  const Trajectory fd = diffusion_run_fd(delta, c, 21);
  CHECK(msd_slope(fd).slope == doctest::Approx(a.slope).epsilon(0.02));

  SUBCASE("unit rescaling of a block-averaged trajectory") {
    EncoderModel enc(cfg(2, 4));
    enc.set_uniform_average();
    const Trajectory macro = enc.encode(diffusion_run_analytic(delta, c, 40));
    MsdOptions opt;
    opt.spatial_scale = 2.0;
    opt.time_scale = 4.0;
    opt.quantity = "msd_vs_t_macro";
    const ScalingFit m = msd_slope(macro, opt);
    CHECK(m.quantity == "msd_vs_t_macro");
    CHECK(m.slope / a.slope == doctest::Approx(1.0).epsilon(0.15));
  }
  CHECK_THROWS_AS(msd_slope(Trajectory{{Field({10}, 1), Field({10}, 1)}, 1.0, Scale::micro}), DomainError);
}

TEST_CASE("linear fit") {
  const ScalingFit f = linear_fit({0, 1, 2, 3}, {1, 3, 5, 7}, "line");
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r2 == doctest::Approx(1.0));
  CHECK_THROWS(linear_fit({1}, {2}));
}

TEST_CASE("box statistics and spearman") {
  const BoxStats b = box_stats({5, 1, 3, 2, 4});
  CHECK(b.min == 1);
  CHECK(b.q1 == 2);
  CHECK(b.median == 3);
  CHECK(b.q3 == 4);
  CHECK(b.max == 5);
  CHECK(box_stats({1, 2}).median == 1.5);
  CHECK_THROWS_AS(box_stats({}), UsageError);

  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 2, 3, 4}, {1, 3, 2, 4}) == doctest::Approx(0.8));
  // ties take average ranks: y ranks 1.5, 1.5, 3, 4
  CHECK(spearman({1, 2, 3, 4}, {5, 5, 6, 7}) == doctest::Approx(0.9486832980505138));
}

TEST_CASE("eta scan table") {
  std::vector<EtaRun> runs;
  for (double eta : {2.0, 1.0}) {
    for (std::uint64_t seed : {0u, 1u, 2u}) {
      EtaRun r;
      r.eta = eta;
      r.seed = seed;
      r.order_parameter = {0.5 / eta + 0.01 * double(seed)};
      r.dynamics_mse = {eta, eta + 1, eta + 2};
      r.reconstruction_mse = {1.0};
      r.converged = !(eta == 2.0 && seed == 2);
      runs.push_back(r);
    }
  }
  const auto rows = eta_scan(runs);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].eta == 1.0);
  CHECK(rows[0].runs == 3);
  CHECK(rows[0].converged);
  CHECK(rows[0].phi_mean == doctest::Approx(0.51));
  CHECK(rows[0].phi_std == doctest::Approx(0.01));
  CHECK(rows[0].dynamics.median == doctest::Approx(2.0));
  CHECK(rows[1].runs == 2);
  CHECK(rows[1].excluded == 1);
  CHECK_FALSE(rows[1].converged);
  CHECK(rows[1].phi_mean == doctest::Approx(0.255));

  std::vector<EtaRun> shuffled(runs.rbegin(), runs.rend());
  const auto again = eta_scan(shuffled);
  CHECK(again[1].phi_mean == rows[1].phi_mean);
  CHECK(again[0].dynamics.q3 == rows[0].dynamics.q3);

  std::vector<EtaRun> single{runs[0]};
  const auto one = eta_scan(single);
  CHECK(std::isnan(one[0].phi_std));
  const auto path = std::filesystem::temp_directory_path() / "selfsim_eta_test.csv";
  write_eta_scan_csv(one, path);
  std::ifstream is(path);
  std::string header;
  std::string row;
  std::getline(is, header);
  std::getline(is, row);
  CHECK(header == "eta,phi_mean,phi_std,dyn_mse_q1,dyn_mse_median,dyn_mse_q3,rec_mse_q1,rec_mse_median,rec_mse_q3,converged");
  CHECK(row.find(",,") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("per-snapshot errors") {
  const DynamicsModel id = identity_dynamics();
  const Trajectory t = ca_data(204, 1, 16, 8, 9).front();
  const auto d = dynamics_errors(t, id);
  CHECK(d.size() == 8);
  for (double e : d) CHECK(e == 0.0);
  EncoderModel enc(cfg(2, 3));
  enc.set_uniform_average();
  DecoderModel dec(cfg(2, 3));
  CHECK(reconstruction_errors(t, id, enc, dec).size() == 2);
}
