#include "selfsim/ca.hpp"

#include <string>

#include "selfsim/errors.hpp"
#include "selfsim/rng.hpp"

namespace selfsim {

CARule::CARule(int number) : number_(number) {
  if (number < 0 || number > 255) {
    throw ConfigError("CA rule number must be in 0..255, got " + std::to_string(number));
  }
  for (std::size_t k = 0; k < 8; ++k) lookup_[k] = static_cast<std::uint8_t>((number >> k) & 1);
}

Field eca_step(const Field& state, const CARule& rule) {
  if (state.dims() != 1 || state.channels() != 1) {
    throw DimensionError("eca_step needs a 1D single-channel field");
  }
  const std::size_t n = state.sites();
  std::vector<int> bits(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = state[i];
    if (v != 0.0 && v != 1.0) {
      throw DomainError("eca_step: site " + std::to_string(i) + " holds non-binary value " + std::to_string(v));
    }
    bits[i] = v == 1.0 ? 1 : 0;
  }
  Field out({n}, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const int left = bits[(i + n - 1) % n];
    const int right = bits[(i + 1) % n];
    out[i] = rule.apply(left, bits[i], right);
  }
  return out;
}

Trajectory eca_run(const CARule& rule, const Field& init, std::size_t steps) {
  if (steps == 0) throw UsageError("eca_run needs at least one step");
  Trajectory traj;
  traj.frames.reserve(steps + 1);
  traj.frames.push_back(init);
  for (std::size_t s = 0; s < steps; ++s) traj.frames.push_back(eca_step(traj.frames.back(), rule));
  return traj;
}

Field random_binary_field(std::size_t sites, Rng& rng) {
  Field f({sites}, 1);
  for (auto& v : f.values()) v = rng.bit() ? 1.0 : 0.0;
  return f;
}

}  // namespace selfsim
