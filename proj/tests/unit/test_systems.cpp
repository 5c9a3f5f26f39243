#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "selfsim/ca.hpp"
#include "selfsim/diffusion.hpp"
#include "selfsim/errors.hpp"
#include "selfsim/rng.hpp"
#include "selfsim/trajectory_io.hpp"
#include "selfsim/vicsek.hpp"

using namespace selfsim;

namespace {

std::vector<double> to_vec(const Field& f) { return {f.values().begin(), f.values().end()}; }

// Independent oracle: the output bit for neighbourhood value k is bit k of
// the rule number.
int oracle(int rule, int l, int c, int r) { return (rule >> (4 * l + 2 * c + r)) & 1; }

double second_moment(const Field& f) {
  const std::size_t n = f.sites();
  double mass = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) - static_cast<double>(n / 2);
    mass += f[i];
    m2 += f[i] * x * x;
  }
  return m2 / mass;
}

}  // namespace

TEST_CASE("eca_step matches the rule-table oracle for all 256 rules") {
  for (int rule = 0; rule < 256; ++rule) {
    const CARule r(rule);
    for (int k = 0; k < 8; ++k) {
      const int l = (k >> 2) & 1;
      const int c = (k >> 1) & 1;
      const int rr = k & 1;
      // Lattice of 3 holding the neighbourhood of site 1.
      const Field f = Field::line({double(l), double(c), double(rr)});
      CHECK(eca_step(f, r)[1] == oracle(rule, l, c, rr));
      CHECK(r.apply(l, c, rr) == oracle(rule, l, c, rr));
    }
  }
}

TEST_CASE("eca examples") {
  Rng rng(4);
  const Field x = random_binary_field(16, rng);
  CHECK(eca_step(x, CARule(0)) == Field({16}, 1, 0.0));
  CHECK(eca_step(x, CARule(204)) == x);
  CHECK(to_vec(eca_step(Field::line({0, 0, 1, 0, 0}), CARule(90))) == std::vector<double>{0, 1, 0, 1, 0});

  SUBCASE("rule 90 from a single seed is Pascal's triangle mod 2") {
    std::vector<double> init(11, 0.0);
    init[5] = 1.0;
    const Trajectory t = eca_run(CARule(90), Field::line(init), 4);
    REQUIRE(t.length() == 5);
    for (std::size_t n = 0; n <= 4; ++n) {
      for (std::size_t k = 0; k <= n; ++k) {
        // binomial(n, k) odd <=> (k & n) == k
        const double bit = ((k & n) == k) ? 1.0 : 0.0;
        CHECK(t[n][5 - n + 2 * k] == bit);
      }
    }
  }
  SUBCASE("rule 255 fills with ones, rule 204 repeats") {
    const Trajectory ones = eca_run(CARule(255), x, 3);
    for (std::size_t s = 1; s < ones.length(); ++s) CHECK(ones[s] == Field({16}, 1, 1.0));
    const Trajectory same = eca_run(CARule(204), x, 3);
    for (const auto& f : same.frames) CHECK(f == x);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(CARule(256), ConfigError);
    CHECK_THROWS_AS(CARule(-1), ConfigError);
    CHECK_THROWS_AS(eca_step(Field::line({0, 0.5, 1}), CARule(30)), DomainError);
    CHECK_THROWS_AS(eca_step(Field({4, 4}, 1), CARule(30)), DimensionError);
    CHECK_THROWS_AS(eca_run(CARule(30), x, 0), UsageError);
  }
}

TEST_CASE("diffusion finite differences") {
  DiffusionConfig cfg;
  cfg.D = 0.25;
  cfg.length = 5;
  CHECK(to_vec(diffusion_step_fd(Field::line({0, 0, 1, 0, 0}), cfg)) == std::vector<double>{0, 0.25, 0.5, 0.25, 0});
  CHECK(diffusion_step_fd(Field({5}, 1, 0.7), cfg) == Field({5}, 1, 0.7));

  SUBCASE("mass conserved to 1e-12 per step") {
    Rng rng(6);
    DiffusionConfig c;
    c.length = 100;
    for (int trial = 0; trial < 20; ++trial) {
      Field f({100}, 1);
      for (auto& v : f.values()) v = rng.uniform();
      for (int step = 0; step < 50; ++step) {
        const Field g = diffusion_step_fd(f, c);
        CHECK(std::abs(g.sum() - f.sum()) <= 1e-12 * std::abs(f.sum()));
        f = g;
      }
    }
  }
  SUBCASE("unstable or malformed configs") {
    DiffusionConfig bad;
    bad.D = 1.0;
    bad.dt = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    DiffusionConfig uneven;
    uneven.length = 10.5;
    CHECK_THROWS_AS(uneven.validate(), ConfigError);
    CHECK_THROWS_AS(parse_diffusion_init("square"), ConfigError);
  }
}

TEST_CASE("diffusion analytic solution") {
  DiffusionConfig cfg;
  cfg.D = 1.0;
  cfg.dt = 1e-4;
  Field delta({100}, 1);
  delta[50] = 1.0;

  SUBCASE("second moment of a delta grows as 2Dt") {
    for (double t : {1.0, 2.0, 5.0, 10.0, 20.0}) {
      CAPTURE(t);
      CHECK(second_moment(diffusion_analytic(delta, cfg, t)) == doctest::Approx(2.0 * cfg.D * t).epsilon(0.01));
    }
  }
  SUBCASE("long times approach the uniform field") {
    const Field f = diffusion_analytic(delta, cfg, 1e5);
    for (std::size_t i = 0; i < 100; ++i) CHECK(f[i] == doctest::Approx(0.01).epsilon(1e-6));
  }
  SUBCASE("agrees with fine finite differences at t=1") {
    // Sampled Gaussian vs the discrete-Laplacian solution: they coincide
    // only for smooth profiles, so the oracle uses a wide bump.
    DiffusionConfig c = cfg;
    c.init = DiffusionInit::gaussian_bump;
    c.bump_sigma = 5.0;
    Rng rng(0);
    const Field init = diffusion_initial(c, rng);
    const Field exact = diffusion_analytic(init, c, 1.0);
    const Trajectory fd = diffusion_run_fd(init, c, 2, 1.0);
    double err = 0.0;
    for (std::size_t i = 0; i < 100; ++i) err += (exact[i] - fd[1][i]) * (exact[i] - fd[1][i]);
    CHECK(err / 100.0 < 1e-8);
  }
  SUBCASE("mass is conserved and values stay non-negative") {
    Rng rng(3);
    DiffusionConfig c = cfg;
    c.init = DiffusionInit::uniform_random;
    const Field init = diffusion_initial(c, rng);
    const Field f = diffusion_analytic(init, c, 3.0);
    CHECK(f.sum() == doctest::Approx(init.sum()).epsilon(1e-12));
    for (double v : f.values()) CHECK(v >= 0.0);
  }
  CHECK_THROWS_AS(diffusion_analytic(delta, cfg, 0.0), DomainError);
}

TEST_CASE("diffusion trajectories share frame spacing across dt") {
  DiffusionConfig c;
  c.init = DiffusionInit::gaussian_bump;
  Rng rng(1);
  const Field init = diffusion_initial(c, rng);
  c.dt = 0.1;
  const Trajectory a = diffusion_run_fd(init, c, 5);
  c.dt = 0.04;
  const Trajectory b = diffusion_run_fd(init, c, 5);
  REQUIRE(a.length() == 5);
  CHECK(a.dt == 1.0);
  CHECK(b.dt == 1.0);
  c.dt = 0.3;
  CHECK_THROWS_AS(diffusion_run_fd(init, c, 5), ConfigError);
}

TEST_CASE("vicsek alignment examples") {
  Rng rng(0);
  ParticleState p;
  p.L = 10;
  p.eta = 0.0;
  p.v0 = 1.0;
  SUBCASE("aligned flock keeps its heading") {
    p.positions = {{1, 1}, {1.5, 1}, {1, 1.5}};
    p.angles = {0.7, 0.7, 0.7};
    const ParticleState q = vicsek_step(p, rng);
    for (double a : q.angles) CHECK(a == doctest::Approx(0.7));
  }
  SUBCASE("two neighbours average to pi/4") {
    p.positions = {{5, 5}, {5.5, 5}};
    p.angles = {0.0, std::numbers::pi / 2};
    const ParticleState q = vicsek_step(p, rng);
    CHECK(q.angles[0] == doctest::Approx(std::numbers::pi / 4));
    CHECK(q.angles[1] == doctest::Approx(std::numbers::pi / 4));
  }
  SUBCASE("isolated particle moves straight") {
    p.positions = {{2, 3}};
    p.angles = {0.3};
    const ParticleState q = vicsek_step(p, rng);
    CHECK(q.angles[0] == doctest::Approx(0.3));
    CHECK(q.positions[0][0] == doctest::Approx(2 + std::cos(0.3)));
    CHECK(q.positions[0][1] == doctest::Approx(3 + std::sin(0.3)));
  }
  SUBCASE("neighbours across the periodic boundary") {
    p.positions = {{0.2, 5}, {9.9, 5}};
    p.angles = {0.0, std::numbers::pi / 2};
    const ParticleState q = vicsek_step(p, rng);
    CHECK(q.angles[0] == doctest::Approx(std::numbers::pi / 4));
  }
}

TEST_CASE("vicsek invariants") {
  VicsekConfig cfg;
  cfg.eta = 2.0;
  Rng rng(12);
  ParticleState p = vicsek_init(cfg, rng);
  REQUIRE(p.size() == cfg.particles());
  CHECK(cfg.particles() == 307);
  for (int step = 0; step < 100; ++step) {
    const ParticleState q = vicsek_step(p, rng);
    REQUIRE(q.size() == p.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double dx = std::remainder(q.positions[i][0] - p.positions[i][0], q.L);
      const double dy = std::remainder(q.positions[i][1] - p.positions[i][1], q.L);
      CHECK(std::hypot(dx, dy) == doctest::Approx(q.v0).epsilon(1e-12));
      CHECK(q.positions[i][0] >= 0.0);
      CHECK(q.positions[i][0] < q.L);
      CHECK(q.positions[i][1] >= 0.0);
      CHECK(q.positions[i][1] < q.L);
    }
    const double phi = order_parameter(q);
    CHECK(phi >= 0.0);
    CHECK(phi <= 1.0);
    p = q;
  }
}

TEST_CASE("vicsek latticize and order parameter") {
  ParticleState p;
  p.L = 8;
  p.positions = {{2.5, 3.5}};
  p.angles = {0.0};
  const Field f = vicsek_latticize(p);
  CHECK(f.channels() == 3);
  CHECK(f.at(0, 2, 3) == 1.0);
  CHECK(f.at(1, 2, 3) == 1.0);
  CHECK(f.at(2, 2, 3) == 0.0);
  CHECK(f.sum() == 2.0);

  VicsekConfig cfg;
  Rng rng(2);
  ParticleState q = vicsek_init(cfg, rng);
  const Field g = vicsek_latticize(q);
  double count = 0.0;
  for (std::size_t i = 0; i < g.sites(); ++i) count += g.values()[i];
  CHECK(count == doctest::Approx(double(q.size())));

  for (auto& a : q.angles) a = 1.1;
  CHECK(order_parameter(q) == doctest::Approx(1.0));
  const Field aligned = vicsek_latticize(q);
  double vx = 0.0;
  double vy = 0.0;
  for (std::size_t i = 0; i < aligned.sites(); ++i) {
    vx += aligned.values()[aligned.sites() + i];
    vy += aligned.values()[2 * aligned.sites() + i];
  }
  CHECK(std::hypot(vx, vy) == doctest::Approx(double(q.size()) * q.v0));

  ParticleState two;
  two.positions = {{1, 1}, {5, 5}};
  two.angles = {0.0, std::numbers::pi};
  CHECK(order_parameter(two) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("vicsek disorder at large noise is O(1/sqrt(N))") {
  VicsekConfig cfg;
  cfg.L = 64;
  cfg.density = 1.0;
  cfg.eta = 2.0;  // noise spans the full circle
  Rng rng(5);
  std::vector<double> phi;
  vicsek_run(cfg, rng, 50, 50, &phi);
  double mean = 0.0;
  for (double v : phi) mean += v;
  mean /= double(phi.size());
  // E|sum of N random unit vectors| / N = sqrt(pi / 4N)
  CHECK(mean < 3.0 * std::sqrt(std::numbers::pi / (4.0 * double(cfg.particles()))));
}

TEST_CASE("vicsek runs are reproducible") {
  VicsekConfig cfg;
  Rng a(9);
  Rng b(9);
  std::vector<double> pa;
  std::vector<double> pb;
  const Trajectory ta = vicsek_run(cfg, a, 10, 5, &pa);
  const Trajectory tb = vicsek_run(cfg, b, 10, 5, &pb);
  CHECK(ta.frames == tb.frames);
  CHECK(pa == pb);
  CHECK(pa.size() == 5);
}

TEST_CASE("trajectory io round trip") {
  Rng rng(3);
  Trajectory t;
  t.dt = 0.25;
  for (int i = 0; i < 4; ++i) {
    Field f({3, 2}, 2);
    for (auto& v : f.values()) v = rng.uniform(-1, 1) / 3.0;
    t.frames.push_back(f);
  }
  std::stringstream ss;
  write_trajectory(t, ss);
  const Trajectory back = read_trajectory(ss);
  CHECK(back.frames == t.frames);
  CHECK(back.dt == t.dt);

  const auto dir = std::filesystem::temp_directory_path() / "selfsim_io_test";
  std::filesystem::create_directories(dir);
  write_pgm(t, dir / "t.pgm");
  std::ifstream is(dir / "t.pgm");
  std::string magic;
  std::size_t w = 0;
  std::size_t h = 0;
  is >> magic >> w >> h;
  CHECK(magic == "P2");
  CHECK(w * h == 4 * 6);
  std::filesystem::remove_all(dir);

  std::stringstream broken("{\"dims\": 1}\n1,2\n");
  CHECK_THROWS(read_trajectory(broken));
}
