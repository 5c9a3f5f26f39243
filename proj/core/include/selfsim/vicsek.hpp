#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "selfsim/field.hpp"

namespace selfsim {

class Rng;

struct VicsekConfig {
  double L = 32.0;
  double density = 0.3;
  double v0 = 1.0;
  double radius = 1.0;
  double eta = 1.0;

  /// round(density * L^2)
  std::size_t particles() const;
  void validate() const;
};

/// Particles on the torus [0, L)^2 moving with constant speed v0.
struct ParticleState {
  std::vector<std::array<double, 2>> positions;
  std::vector<double> angles;
  double L = 32.0;
  double v0 = 1.0;
  double radius = 1.0;
  double eta = 1.0;

  std::size_t size() const noexcept { return angles.size(); }
};

/// Uniform positions and angles.
ParticleState vicsek_init(const VicsekConfig& cfg, Rng& rng);

/// Each heading becomes the circular mean of all headings within `radius`
/// (itself included) plus eta * xi with xi ~ U[-pi/2, pi/2]; then every
/// particle advances v0 along its new heading (unit time step) and wraps.
ParticleState vicsek_step(const ParticleState& p, Rng& rng);

/// Unit-cell grid of side L with channels (count, sum vx, sum vy),
/// extents {L, L} indexed [x cell, y cell].
Field vicsek_latticize(const ParticleState& p);

/// |sum of velocities| / (N v0), in [0, 1].
double order_parameter(const ParticleState& p);

/// `warmup` discarded steps, then `frames` latticized snapshots.
Trajectory vicsek_run(const VicsekConfig& cfg, Rng& rng, std::size_t warmup, std::size_t frames,
                      std::vector<double>* order = nullptr);

}  // namespace selfsim
