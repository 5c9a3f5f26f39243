#include "selfsim/trajectory_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "selfsim/errors.hpp"

namespace selfsim {

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, end);
}

double parse_double(std::string_view token) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    throw ConfigError("trajectory: cannot parse value '" + std::string(token) + "'");
  }
  return v;
}

}  // namespace

void write_trajectory(const Trajectory& traj, std::ostream& os) {
  traj.validate(1);
  const Field& f0 = traj.frames.front();
  nlohmann::json header = {
      {"dims", f0.dims()},
      {"extents", f0.extents()},
      {"channels", f0.channels()},
      {"frames", traj.length()},
      {"dt", traj.dt},
      {"origin", traj.origin == Scale::micro ? "micro" : "macro"},
  };
  os << header.dump() << '\n';
  std::string row;
  for (const auto& f : traj.frames) {
    row.clear();
    for (std::size_t i = 0; i < f.values().size(); ++i) {
      if (i > 0) row.push_back(',');
      append_double(row, f[i]);
    }
    row.push_back('\n');
    os << row;
  }
}

Trajectory read_trajectory(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("trajectory: missing header");
  const auto header = nlohmann::json::parse(line);
  for (const char* key : {"dims", "extents", "channels", "frames", "dt"}) {
    if (!header.contains(key)) throw ConfigError(std::string("trajectory header lacks '") + key + "'");
  }
  const auto extents = header.at("extents").get<std::vector<std::size_t>>();
  const auto channels = header.at("channels").get<std::size_t>();
  const auto frames = header.at("frames").get<std::size_t>();
  if (header.at("dims").get<std::size_t>() != extents.size()) {
    throw ConfigError("trajectory header: dims does not match extents");
  }
  Trajectory traj;
  traj.dt = header.at("dt").get<double>();
  traj.origin = header.value("origin", "micro") == "macro" ? Scale::macro : Scale::micro;
  for (std::size_t t = 0; t < frames; ++t) {
    if (!std::getline(is, line)) throw ConfigError("trajectory: expected " + std::to_string(frames) + " rows");
    std::vector<double> values;
    std::string_view rest(line);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      values.push_back(parse_double(rest.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    traj.frames.emplace_back(extents, channels, std::move(values));
  }
  return traj;
}

void save_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  write_trajectory(traj, os);
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path.string());
  return read_trajectory(is);
}

void write_pgm(const Trajectory& traj, const std::filesystem::path& path, std::size_t channel) {
  traj.validate(1);
  const Field& f0 = traj.frames.front();
  if (channel >= f0.channels()) throw DimensionError("write_pgm: channel out of range");
  const std::size_t sites = f0.sites();
  double lo = f0[channel * sites];
  double hi = lo;
  for (const auto& f : traj.frames) {
    for (std::size_t i = 0; i < sites; ++i) {
      lo = std::min(lo, f[channel * sites + i]);
      hi = std::max(hi, f[channel * sites + i]);
    }
  }
  const double range = hi > lo ? hi - lo : 1.0;
  const auto pixel = [&](double v) { return static_cast<int>(std::lround(255.0 * (v - lo) / range)); };

  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  if (f0.dims() == 1) {
    os << "P2\n" << sites << ' ' << traj.length() << "\n255\n";
    for (const auto& f : traj.frames) {
      for (std::size_t i = 0; i < sites; ++i) os << (i ? " " : "") << pixel(f[channel * sites + i]);
      os << '\n';
    }
    return;
  }
  const std::size_t nx = f0.extents()[0];
  const std::size_t ny = f0.extents()[1];
  os << "P2\n" << ny * traj.length() << ' ' << nx << "\n255\n";
  for (std::size_t x = 0; x < nx; ++x) {
    bool first = true;
    for (const auto& f : traj.frames) {
      for (std::size_t y = 0; y < ny; ++y) {
        os << (first ? "" : " ") << pixel(f.at(channel, x, y));
        first = false;
      }
    }
    os << '\n';
  }
}

}  // namespace selfsim
