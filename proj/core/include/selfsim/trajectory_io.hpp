#pragma once

#include <filesystem>
#include <iosfwd>

#include "selfsim/field.hpp"

namespace selfsim {

// Text format: line 1 is a JSON header
//   {"dims", "extents", "channels", "frames", "dt", "origin"}
// followed by one CSV row per frame holding the frame's values in
// channels-first row-major order. Doubles round-trip exactly.

void write_trajectory(const Trajectory& traj, std::ostream& os);
Trajectory read_trajectory(std::istream& is);
void save_trajectory(const Trajectory& traj, const std::filesystem::path& path);
Trajectory load_trajectory(const std::filesystem::path& path);

/// ASCII PGM (P2) of one channel, values scaled linearly to 0..255 over the
/// trajectory's range. 1D: one row per frame. 2D: frames side by side.
void write_pgm(const Trajectory& traj, const std::filesystem::path& path, std::size_t channel = 0);

}  // namespace selfsim
