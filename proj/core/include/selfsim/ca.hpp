#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "selfsim/field.hpp"

namespace selfsim {

class Rng;

/// Elementary (radius-1, binary) cellular automaton rule in Wolfram numbering:
/// the neighbourhood (left, centre, right) read as a 3-bit number k selects
/// bit k of the rule number.
class CARule {
 public:
  /// Throws ConfigError outside 0..255.
  explicit CARule(int number);

  int number() const noexcept { return number_; }
  const std::array<std::uint8_t, 8>& lookup() const noexcept { return lookup_; }
  std::uint8_t apply(int left, int centre, int right) const noexcept {
    return lookup_[static_cast<std::size_t>((left << 2) | (centre << 1) | right)];
  }

 private:
  int number_;
  std::array<std::uint8_t, 8> lookup_{};
};

/// One synchronous update on a periodic 1D single-channel binary field.
/// Throws DomainError if any value is not exactly 0.0 or 1.0.
Field eca_step(const Field& state, const CARule& rule);

/// `steps + 1` frames starting with `init`. Throws UsageError for steps == 0.
Trajectory eca_run(const CARule& rule, const Field& init, std::size_t steps);

/// Independent fair bits per site.
Field random_binary_field(std::size_t sites, Rng& rng);

}  // namespace selfsim
