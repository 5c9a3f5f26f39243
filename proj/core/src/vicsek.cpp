#include "selfsim/vicsek.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "selfsim/errors.hpp"
#include "selfsim/rng.hpp"

namespace selfsim {

namespace {

double wrap(double x, double L) {
  double w = std::fmod(x, L);
  if (w < 0) w += L;
  // fmod of a tiny negative number can round up to L
  if (w >= L) w = 0.0;
  return w;
}

std::size_t grid_side(double L) {
  const auto n = static_cast<std::size_t>(std::llround(L));
  if (n == 0 || std::abs(L - static_cast<double>(n)) > 1e-9) {
    throw ConfigError("vicsek: torus size " + std::to_string(L) + " must be a positive integer");
  }
  return n;
}

}  // namespace

std::size_t VicsekConfig::particles() const {
  return static_cast<std::size_t>(std::llround(density * L * L));
}

void VicsekConfig::validate() const {
  grid_side(L);
  if (!(density > 0) || !(v0 > 0) || !(radius > 0) || !(eta >= 0)) {
    throw ConfigError("vicsek: density, v0 and radius must be positive and eta non-negative");
  }
  if (particles() == 0) throw ConfigError("vicsek: density * L^2 rounds to zero particles");
}

ParticleState vicsek_init(const VicsekConfig& cfg, Rng& rng) {
  cfg.validate();
  ParticleState p;
  p.L = cfg.L;
  p.v0 = cfg.v0;
  p.radius = cfg.radius;
  p.eta = cfg.eta;
  const std::size_t n = cfg.particles();
  p.positions.resize(n);
  p.angles.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.positions[i] = {rng.uniform(0.0, cfg.L), rng.uniform(0.0, cfg.L)};
    p.angles[i] = rng.uniform(-std::numbers::pi, std::numbers::pi);
  }
  return p;
}

ParticleState vicsek_step(const ParticleState& p, Rng& rng) {
  const std::size_t n = p.size();
  const double L = p.L;
  // cell list with cells no smaller than the interaction radius
  const auto cells = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(L / p.radius)));
  const double cell_size = L / static_cast<double>(cells);
  std::vector<std::vector<std::size_t>> bucket(cells * cells);
  std::vector<std::array<std::size_t, 2>> home(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto cx = std::min(cells - 1, static_cast<std::size_t>(p.positions[i][0] / cell_size));
    const auto cy = std::min(cells - 1, static_cast<std::size_t>(p.positions[i][1] / cell_size));
    home[i] = {cx, cy};
    bucket[cx * cells + cy].push_back(i);
  }
  const double r2 = p.radius * p.radius;
  const long span = cells >= 3 ? 1 : 0;

  ParticleState next = p;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    double c = 0.0;
    const auto visit = [&](std::size_t j) {
      double dx = std::abs(p.positions[i][0] - p.positions[j][0]);
      double dy = std::abs(p.positions[i][1] - p.positions[j][1]);
      dx = std::min(dx, L - dx);
      dy = std::min(dy, L - dy);
      if (dx * dx + dy * dy <= r2) {
        s += std::sin(p.angles[j]);
        c += std::cos(p.angles[j]);
      }
    };
    if (span == 0) {
      for (std::size_t j = 0; j < n; ++j) visit(j);
    } else {
      const auto m = static_cast<long>(cells);
      for (long ox = -span; ox <= span; ++ox) {
        for (long oy = -span; oy <= span; ++oy) {
          const auto bx = static_cast<std::size_t>((static_cast<long>(home[i][0]) + ox + m) % m);
          const auto by = static_cast<std::size_t>((static_cast<long>(home[i][1]) + oy + m) % m);
          for (std::size_t j : bucket[bx * cells + by]) visit(j);
        }
      }
    }
    const double xi = rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
    next.angles[i] = std::atan2(s, c) + p.eta * xi;
  }
  for (std::size_t i = 0; i < n; ++i) {
    next.positions[i][0] = wrap(p.positions[i][0] + p.v0 * std::cos(next.angles[i]), L);
    next.positions[i][1] = wrap(p.positions[i][1] + p.v0 * std::sin(next.angles[i]), L);
  }
  return next;
}

Field vicsek_latticize(const ParticleState& p) {
  const std::size_t side = grid_side(p.L);
  Field f({side, side}, 3);
  const std::size_t plane = side * side;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto cx = std::min(side - 1, static_cast<std::size_t>(p.positions[i][0]));
    const auto cy = std::min(side - 1, static_cast<std::size_t>(p.positions[i][1]));
    const std::size_t site = cx * side + cy;
    f[site] += 1.0;
    f[plane + site] += p.v0 * std::cos(p.angles[i]);
    f[2 * plane + site] += p.v0 * std::sin(p.angles[i]);
  }
  return f;
}

double order_parameter(const ParticleState& p) {
  if (p.size() == 0) throw DomainError("order_parameter needs at least one particle");
  double vx = 0.0;
  double vy = 0.0;
  for (double a : p.angles) {
    vx += std::cos(a);
    vy += std::sin(a);
  }
  // speeds are all v0, so the v0 factors cancel
  const double phi = std::hypot(vx, vy) / static_cast<double>(p.size());
  return std::min(1.0, phi);
}

Trajectory vicsek_run(const VicsekConfig& cfg, Rng& rng, std::size_t warmup, std::size_t frames,
                      std::vector<double>* order) {
  ParticleState p = vicsek_init(cfg, rng);
  for (std::size_t s = 0; s < warmup; ++s) p = vicsek_step(p, rng);
  Trajectory traj;
  traj.frames.reserve(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    if (f > 0) p = vicsek_step(p, rng);
    traj.frames.push_back(vicsek_latticize(p));
    if (order) order->push_back(order_parameter(p));
  }
  return traj;
}

}  // namespace selfsim
