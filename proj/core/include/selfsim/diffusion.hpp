#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "selfsim/field.hpp"

namespace selfsim {

class Rng;

enum class DiffusionInit { delta, uniform_random, gaussian_bump };

DiffusionInit parse_diffusion_init(std::string_view name);

/// Conserved 1D diffusion `dC/dt = D d2C/dx2` on a periodic domain.
struct DiffusionConfig {
  double D = 0.5;
  double dt = 1.0;
  double dx = 1.0;
  double length = 100.0;
  double t_end = 100.0;
  DiffusionInit init = DiffusionInit::delta;
  /// Number of unit spikes for `delta` initial conditions.
  std::size_t spikes = 1;
  /// Width (in sites) of the `gaussian_bump` initial condition.
  double bump_sigma = 5.0;

  double courant() const noexcept { return D * dt / (dx * dx); }
  std::size_t sites() const;
  /// Throws ConfigError for non-positive parameters, D*dt/dx^2 > 0.5 or a
  /// length that is not a whole number of cells.
  void validate() const;
};

/// Explicit three-point step `C_i += r (C_{i+1} - 2 C_i + C_{i-1})`.
Field diffusion_step_fd(const Field& field, const DiffusionConfig& cfg);

/// Exact solution at time `t`: circular convolution of `init` with the
/// periodized heat kernel sampled on the grid and renormalized to unit mass.
/// Throws DomainError for t <= 0.
Field diffusion_analytic(const Field& init, const DiffusionConfig& cfg, double t);

/// Sampled, periodized and unit-mass heat kernel for time `t`, indexed by
/// signed offset modulo the lattice size.
std::vector<double> heat_kernel(std::size_t sites, double D, double dx, double t);

Field diffusion_initial(const DiffusionConfig& cfg, Rng& rng);

/// Explicit-scheme trajectory subsampled every `frame_dt` time units, so
/// runs with different dt share frame spacing. `frames` includes the initial
/// state. frame_dt must be a whole multiple of dt.
Trajectory diffusion_run_fd(const Field& init, const DiffusionConfig& cfg, std::size_t frames,
                            double frame_dt = 1.0);

/// Analytic trajectory at t = 0, frame_dt, 2 frame_dt, ...
Trajectory diffusion_run_analytic(const Field& init, const DiffusionConfig& cfg, std::size_t frames,
                                  double frame_dt = 1.0);

}  // namespace selfsim
