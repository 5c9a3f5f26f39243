#include "selfsim/diffusion.hpp"

#include <cmath>
#include <string>

#include "selfsim/errors.hpp"
#include "selfsim/rng.hpp"

namespace selfsim {

DiffusionInit parse_diffusion_init(std::string_view name) {
  if (name == "delta") return DiffusionInit::delta;
  if (name == "uniform_random") return DiffusionInit::uniform_random;
  if (name == "gaussian_bump") return DiffusionInit::gaussian_bump;
  throw ConfigError("unknown diffusion initial condition '" + std::string(name) + "'");
}

std::size_t DiffusionConfig::sites() const {
  return static_cast<std::size_t>(std::llround(length / dx));
}

void DiffusionConfig::validate() const {
  if (!(D > 0) || !(dt > 0) || !(dx > 0) || !(length > 0) || !(t_end > 0)) {
    throw ConfigError("diffusion: D, dt, dx, length and t_end must be positive");
  }
  if (courant() > 0.5) {
    throw ConfigError("diffusion: D*dt/dx^2 = " + std::to_string(courant()) +
                      " exceeds the explicit-scheme stability bound 0.5");
  }
  const double cells = length / dx;
  if (std::abs(cells - std::round(cells)) > 1e-9 || cells < 1) {
    throw ConfigError("diffusion: length/dx = " + std::to_string(cells) + " is not a whole number of cells");
  }
}

Field diffusion_step_fd(const Field& field, const DiffusionConfig& cfg) {
  cfg.validate();
  if (field.dims() != 1 || field.channels() != 1) {
    throw DimensionError("diffusion_step_fd needs a 1D single-channel field");
  }
  const std::size_t n = field.sites();
  const double r = cfg.courant();
  Field out({n}, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double left = field[(i + n - 1) % n];
    const double right = field[(i + 1) % n];
    out[i] = field[i] + r * ((right - field[i]) + (left - field[i]));
  }
  return out;
}

std::vector<double> heat_kernel(std::size_t sites, double D, double dx, double t) {
  if (!(t > 0)) throw DomainError("heat kernel needs t > 0, got " + std::to_string(t));
  const double four_dt = 4.0 * D * t;
  const double length = static_cast<double>(sites) * dx;
  // images beyond this many periods contribute below double precision
  const int images = 1 + static_cast<int>(std::ceil(std::sqrt(four_dt * 40.0) / length));
  std::vector<double> k(sites, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < sites; ++i) {
    double acc = 0.0;
    for (int m = -images; m <= images; ++m) {
      const double x = static_cast<double>(i) * dx + m * length;
      acc += std::exp(-x * x / four_dt);
    }
    k[i] = acc;
    total += acc;
  }
  for (auto& v : k) v /= total;
  return k;
}

Field diffusion_analytic(const Field& init, const DiffusionConfig& cfg, double t) {
  if (!(t > 0)) throw DomainError("diffusion_analytic needs t > 0, got " + std::to_string(t));
  if (init.dims() != 1 || init.channels() != 1) {
    throw DimensionError("diffusion_analytic needs a 1D single-channel field");
  }
  const std::size_t n = init.sites();
  const auto k = heat_kernel(n, cfg.D, cfg.dx, t);
  Field out({n}, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += init[j] * k[(i + n - j) % n];
    out[i] = acc;
  }
  return out;
}

Field diffusion_initial(const DiffusionConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t n = cfg.sites();
  Field f({n}, 1);
  switch (cfg.init) {
    case DiffusionInit::delta:
      for (std::size_t s = 0; s < cfg.spikes; ++s) f[rng.index(n)] += 1.0;
      break;
    case DiffusionInit::uniform_random:
      for (auto& v : f.values()) v = rng.uniform();
      break;
    case DiffusionInit::gaussian_bump: {
      const double centre = static_cast<double>(rng.index(n));
      for (std::size_t i = 0; i < n; ++i) {
        double d = std::abs(static_cast<double>(i) - centre);
        d = std::min(d, static_cast<double>(n) - d);
        f[i] = std::exp(-d * d / (2.0 * cfg.bump_sigma * cfg.bump_sigma));
      }
      break;
    }
  }
  return f;
}

Trajectory diffusion_run_fd(const Field& init, const DiffusionConfig& cfg, std::size_t frames,
                            double frame_dt) {
  cfg.validate();
  const double ratio = frame_dt / cfg.dt;
  const auto substeps = static_cast<std::size_t>(std::llround(ratio));
  if (substeps == 0 || std::abs(ratio - static_cast<double>(substeps)) > 1e-9) {
    throw ConfigError("diffusion: frame spacing " + std::to_string(frame_dt) + " is not a multiple of dt " +
                      std::to_string(cfg.dt));
  }
  Trajectory traj;
  traj.dt = frame_dt;
  traj.frames.reserve(frames);
  Field state = init;
  for (std::size_t f = 0; f < frames; ++f) {
    if (f > 0) {
      for (std::size_t s = 0; s < substeps; ++s) state = diffusion_step_fd(state, cfg);
    }
    traj.frames.push_back(state);
  }
  return traj;
}

Trajectory diffusion_run_analytic(const Field& init, const DiffusionConfig& cfg, std::size_t frames,
                                  double frame_dt) {
  Trajectory traj;
  traj.dt = frame_dt;
  traj.frames.reserve(frames);
  traj.frames.push_back(init);
  for (std::size_t f = 1; f < frames; ++f) {
    traj.frames.push_back(diffusion_analytic(init, cfg, frame_dt * static_cast<double>(f)));
  }
  return traj;
}

}  // namespace selfsim
