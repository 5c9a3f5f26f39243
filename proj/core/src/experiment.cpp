#include "selfsim/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "selfsim/analyzer.hpp"
#include "selfsim/ca.hpp"
#include "selfsim/errors.hpp"
#include "selfsim/rng.hpp"
#include "selfsim/trajectory_io.hpp"

#ifndef SELFSIM_VERSION
#define SELFSIM_VERSION "0.0.0"
#endif

namespace selfsim {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string tool_version() { return SELFSIM_VERSION; }

namespace {

const std::vector<int> kTable1Rules{0,   15,  51,  60,  85,  90,  102, 128, 136, 150, 153,
                                    165, 170, 192, 195, 204, 238, 240, 252, 254, 255};

// Collects every problem in a config document before failing.
class Checker {
 public:
  void error(const std::string& path, const std::string& message) { errors_.push_back(path + ": " + message); }

  void unknown_keys(const json& doc, const std::string& path, const std::set<std::string>& allowed) {
    if (!doc.is_object()) {
      error(path, "must be an object");
      return;
    }
    for (const auto& [key, _] : doc.items()) {
      if (!allowed.contains(key)) error(path.empty() ? key : path + "." + key, "unknown key");
    }
  }

  template <class T>
  T get(const json& doc, const std::string& key, T fallback, const std::string& path) {
    if (!doc.is_object() || !doc.contains(key)) return fallback;
    try {
      return doc.at(key).get<T>();
    } catch (const json::exception&) {
      error(path.empty() ? key : path + "." + key, "has the wrong type");
      return fallback;
    }
  }

  // Runs a parser that throws ConfigError, recording the message under `path`.
  template <class F>
  void guard(const std::string& path, F&& f) {
    try {
      f();
    } catch (const ConfigError& e) {
      error(path, e.what());
    } catch (const json::exception& e) {
      error(path, e.what());
    }
  }

  void finish() const {
    if (errors_.empty()) return;
    std::string msg = "invalid experiment config:";
    for (const auto& e : errors_) msg += "\n  " + e;
    throw ConfigError(msg);
  }

 private:
  std::vector<std::string> errors_;
};

std::string format_eta(double eta) {
  std::ostringstream s;
  s << "eta" << std::fixed << std::setprecision(2) << eta;
  return s.str();
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_json(const json& doc, const fs::path& path) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw ConfigError("cannot write " + tmp.string());
    os << doc.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string kind_name(SystemKind k) {
  switch (k) {
    case SystemKind::ca: return "ca";
    case SystemKind::diffusion: return "diffusion";
    case SystemKind::vicsek: return "vicsek";
  }
  return "unknown";
}

std::size_t system_dims(SystemKind k) { return k == SystemKind::vicsek ? 2 : 1; }

std::string candidate_dir(const CoarseGrainSpec& c) {
  return "S" + std::to_string(c.S) + "_T" + std::to_string(c.T);
}

void parse_system(const json& sys, ExperimentConfig& cfg, Checker& chk) {
  const std::string kind = chk.get<std::string>(sys, "kind", "", "system");
  if (kind == "ca") {
    cfg.kind = SystemKind::ca;
    chk.unknown_keys(sys, "system",
                     {"kind", "rules", "stage1_lattice", "stage1_trajectories", "stage1_steps", "lattice",
                      "trajectories", "frames", "eval_trajectories"});
    CaSystem& ca = cfg.ca;
    if (sys.contains("rules") && sys.at("rules").is_string()) {
      if (sys.at("rules").get<std::string>() == "table1") {
        ca.rules = kTable1Rules;
      } else {
        chk.error("system.rules", "must be a list of rule numbers or \"table1\"");
      }
    } else {
      ca.rules = chk.get<std::vector<int>>(sys, "rules", {}, "system");
    }
    if (ca.rules.empty()) chk.error("system.rules", "must list at least one rule");
    for (int r : ca.rules) {
      if (r < 0 || r > 255) chk.error("system.rules", "rule " + std::to_string(r) + " outside 0..255");
    }
    ca.stage1_lattice = chk.get(sys, "stage1_lattice", ca.stage1_lattice, "system");
    ca.stage1_trajectories = chk.get(sys, "stage1_trajectories", ca.stage1_trajectories, "system");
    ca.stage1_steps = chk.get(sys, "stage1_steps", ca.stage1_steps, "system");
    ca.lattice = chk.get(sys, "lattice", ca.lattice, "system");
    ca.trajectories = chk.get(sys, "trajectories", ca.trajectories, "system");
    ca.frames = chk.get(sys, "frames", ca.frames, "system");
    ca.eval_trajectories = chk.get(sys, "eval_trajectories", ca.eval_trajectories, "system");
    if (ca.stage1_steps < 1) chk.error("system.stage1_steps", "must be >= 1");
    if (ca.stage1_trajectories < 2 || ca.trajectories < 2) chk.error("system.trajectories", "need at least 2");
    if (ca.eval_trajectories < 1) chk.error("system.eval_trajectories", "must be >= 1");
  } else if (kind == "diffusion") {
    cfg.kind = SystemKind::diffusion;
    chk.unknown_keys(sys, "system",
                     {"kind", "D", "dx", "length", "t_end", "init", "spikes", "bump_sigma", "datasets",
                      "trajectories", "frames", "eval_trajectories"});
    DiffusionSystem& d = cfg.diffusion;
    d.base.D = chk.get(sys, "D", d.base.D, "system");
    d.base.dx = chk.get(sys, "dx", d.base.dx, "system");
    d.base.length = chk.get(sys, "length", d.base.length, "system");
    d.base.t_end = chk.get(sys, "t_end", d.base.t_end, "system");
    d.base.spikes = chk.get(sys, "spikes", d.base.spikes, "system");
    d.base.bump_sigma = chk.get(sys, "bump_sigma", d.base.bump_sigma, "system");
    if (sys.contains("init")) {
      chk.guard("system.init", [&] { d.base.init = parse_diffusion_init(sys.at("init").get<std::string>()); });
    }
    d.trajectories = chk.get(sys, "trajectories", d.trajectories, "system");
    d.frames = chk.get(sys, "frames", d.frames, "system");
    d.eval_trajectories = chk.get(sys, "eval_trajectories", d.eval_trajectories, "system");
    if (d.trajectories < 2) chk.error("system.trajectories", "need at least 2");
    if (d.eval_trajectories < 1) chk.error("system.eval_trajectories", "must be >= 1");
    const json ds = sys.value("datasets", json::array());
    if (!ds.is_array() || ds.empty()) chk.error("system.datasets", "must be a non-empty list");
    std::set<std::string> ids;
    for (std::size_t i = 0; ds.is_array() && i < ds.size(); ++i) {
      const std::string path = "system.datasets[" + std::to_string(i) + "]";
      chk.unknown_keys(ds[i], path, {"id", "source", "dt"});
      DiffusionDataset item;
      item.id = chk.get<std::string>(ds[i], "id", "", path);
      item.source = chk.get<std::string>(ds[i], "source", item.source, path);
      item.dt = chk.get(ds[i], "dt", item.dt, path);
      if (item.id.empty()) chk.error(path + ".id", "is required");
      if (!ids.insert(item.id).second) chk.error(path + ".id", "duplicate id '" + item.id + "'");
      if (item.source != "analytic" && item.source != "fd") chk.error(path + ".source", "must be analytic or fd");
      DiffusionConfig c = d.base;
      c.dt = item.dt;
      chk.guard(path, [&] { c.validate(); });
      if (item.source == "fd") {
        const double ratio = 1.0 / item.dt;
        if (std::abs(ratio - std::round(ratio)) > 1e-9) chk.error(path + ".dt", "must divide the unit frame spacing");
      }
      d.datasets.push_back(item);
    }
  } else if (kind == "vicsek") {
    cfg.kind = SystemKind::vicsek;
    chk.unknown_keys(sys, "system",
                     {"kind", "L", "density", "v0", "radius", "etas", "trajectories", "warmup", "frames",
                      "eval_trajectories"});
    VicsekSystem& v = cfg.vicsek;
    v.base.L = chk.get(sys, "L", v.base.L, "system");
    v.base.density = chk.get(sys, "density", v.base.density, "system");
    v.base.v0 = chk.get(sys, "v0", v.base.v0, "system");
    v.base.radius = chk.get(sys, "radius", v.base.radius, "system");
    v.etas = chk.get<std::vector<double>>(sys, "etas", {}, "system");
    v.trajectories = chk.get(sys, "trajectories", v.trajectories, "system");
    v.warmup = chk.get(sys, "warmup", v.warmup, "system");
    v.frames = chk.get(sys, "frames", v.frames, "system");
    v.eval_trajectories = chk.get(sys, "eval_trajectories", v.eval_trajectories, "system");
    if (v.etas.empty()) chk.error("system.etas", "must list at least one noise value");
    if (v.trajectories < 2) chk.error("system.trajectories", "need at least 2");
    if (v.eval_trajectories < 1) chk.error("system.eval_trajectories", "must be >= 1");
    chk.guard("system", [&] { v.base.validate(); });
  } else {
    chk.error("system.kind", "must be one of ca, diffusion, vicsek");
  }
}

// Lattice extent and frame count that every candidate must divide.
std::vector<std::pair<std::string, std::size_t>> divisibility_targets(const ExperimentConfig& cfg, bool spatial) {
  switch (cfg.kind) {
    case SystemKind::ca:
      return spatial ? std::vector<std::pair<std::string, std::size_t>>{{"system.lattice", cfg.ca.lattice}}
                     : std::vector<std::pair<std::string, std::size_t>>{{"system.frames", cfg.ca.frames}};
    case SystemKind::diffusion: {
      const auto n = static_cast<std::size_t>(std::llround(cfg.diffusion.base.length / cfg.diffusion.base.dx));
      return spatial ? std::vector<std::pair<std::string, std::size_t>>{{"system.length", n}}
                     : std::vector<std::pair<std::string, std::size_t>>{{"system.frames", cfg.diffusion.frames}};
    }
    case SystemKind::vicsek:
      return spatial ? std::vector<std::pair<std::string, std::size_t>>{{"system.L", static_cast<std::size_t>(
                                                                                         std::llround(cfg.vicsek.base.L))}}
                     : std::vector<std::pair<std::string, std::size_t>>{{"system.frames", cfg.vicsek.frames}};
  }
  return {};
}

}  // namespace

std::string config_hash(const json& canonical) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical.dump())));
  return buf;
}

json ExperimentConfig::canonical() const {
  json sys;
  switch (kind) {
    case SystemKind::ca:
      sys = {{"kind", "ca"},
             {"rules", ca.rules},
             {"stage1_lattice", ca.stage1_lattice},
             {"stage1_trajectories", ca.stage1_trajectories},
             {"stage1_steps", ca.stage1_steps},
             {"lattice", ca.lattice},
             {"trajectories", ca.trajectories},
             {"frames", ca.frames},
             {"eval_trajectories", ca.eval_trajectories}};
      break;
    case SystemKind::diffusion: {
      json ds = json::array();
      for (const auto& d : diffusion.datasets) ds.push_back({{"id", d.id}, {"source", d.source}, {"dt", d.dt}});
      const char* init = diffusion.base.init == DiffusionInit::delta            ? "delta"
                         : diffusion.base.init == DiffusionInit::uniform_random ? "uniform_random"
                                                                                : "gaussian_bump";
      sys = {{"kind", "diffusion"},
             {"D", diffusion.base.D},
             {"dx", diffusion.base.dx},
             {"length", diffusion.base.length},
             {"t_end", diffusion.base.t_end},
             {"init", init},
             {"spikes", diffusion.base.spikes},
             {"bump_sigma", diffusion.base.bump_sigma},
             {"datasets", ds},
             {"trajectories", diffusion.trajectories},
             {"frames", diffusion.frames},
             {"eval_trajectories", diffusion.eval_trajectories}};
      break;
    }
    case SystemKind::vicsek:
      sys = {{"kind", "vicsek"},
             {"L", vicsek.base.L},
             {"density", vicsek.base.density},
             {"v0", vicsek.base.v0},
             {"radius", vicsek.base.radius},
             {"etas", vicsek.etas},
             {"trajectories", vicsek.trajectories},
             {"warmup", vicsek.warmup},
             {"frames", vicsek.frames},
             {"eval_trajectories", vicsek.eval_trajectories}};
      break;
  }
  json cands = json::array();
  for (const auto& c : candidates) cands.push_back({{"S", c.S}, {"T", c.T}});
  json coarse_doc = to_json(coarse);
  coarse_doc.erase("coarse");
  return {{"name", name},
          {"system", sys},
          {"dynamics", to_json(dynamics)},
          {"coarse", coarse_doc},
          {"candidates", cands},
          {"train", {{"dynamics", to_json(stage1)}, {"coarse", to_json(stage2)}}},
          {"baseline", baseline},
          {"seeds", seeds},
          {"analysis", {{"threshold", threshold}, {"binarize_macro", binarize_macro}}},
          {"assertions", assertions}};
}

std::string ExperimentConfig::hash() const { return config_hash(canonical()); }

ExperimentConfig experiment_from_json(const json& doc) {
  Checker chk;
  ExperimentConfig cfg;
  chk.unknown_keys(doc, "",
                   {"name", "system", "dynamics", "coarse", "candidates", "train", "baseline", "seeds", "analysis",
                    "assertions", "output_dir"});
  if (!doc.is_object()) chk.finish();
  cfg.name = chk.get<std::string>(doc, "name", "", "");
  if (cfg.name.empty()) chk.error("name", "is required");
  if (cfg.name.find('/') != std::string::npos) chk.error("name", "must not contain '/'");
  if (!doc.contains("system")) {
    chk.error("system", "is required");
  } else {
    parse_system(doc.at("system"), cfg, chk);
  }
  if (doc.contains("dynamics")) {
    chk.guard("dynamics", [&] { cfg.dynamics = dynamics_config_from_json(doc.at("dynamics")); });
  }
  const std::size_t dims = system_dims(cfg.kind);
  if (cfg.dynamics.kernel.size() != dims) chk.error("dynamics.kernel", "needs " + std::to_string(dims) + " axes");
  if (doc.contains("coarse")) {
    chk.guard("coarse", [&] {
      json c = doc.at("coarse");
      if (c.contains("coarse")) throw ConfigError("S and T belong in 'candidates'");
      cfg.coarse = coarse_config_from_json(c);
    });
  }
  cfg.coarse.spec.d = dims;
  if (cfg.coarse.macro_channels != cfg.dynamics.channels) {
    chk.error("coarse.macro_channels", "must equal dynamics.channels so the dynamics applies to macro fields");
  }

  const json cands = doc.value("candidates", json::array());
  if (!cands.is_array() || cands.empty()) chk.error("candidates", "must be a non-empty list of {S, T}");
  for (std::size_t i = 0; cands.is_array() && i < cands.size(); ++i) {
    const std::string path = "candidates[" + std::to_string(i) + "]";
    chk.unknown_keys(cands[i], path, {"S", "T"});
    CoarseGrainSpec c;
    c.S = chk.get<std::size_t>(cands[i], "S", 0, path);
    c.T = chk.get<std::size_t>(cands[i], "T", 0, path);
    c.d = dims;
    if (c.S < 1 || c.T < 1) {
      chk.error(path, "S and T must be >= 1");
      continue;
    }
    for (const auto& [key, n] : divisibility_targets(cfg, true)) {
      if (n % c.S != 0) {
        chk.error(path + ".S", "S = " + std::to_string(c.S) + " does not divide " + key + " = " + std::to_string(n) +
                                   " (" + std::to_string(n) + " % " + std::to_string(c.S) + " = " +
                                   std::to_string(n % c.S) + ")");
      } else {
        for (auto k : cfg.dynamics.kernel) {
          if (n / c.S < k) chk.error(path + ".S", "macro lattice smaller than the dynamics kernel");
        }
      }
    }
    for (const auto& [key, n] : divisibility_targets(cfg, false)) {
      if (n % c.T != 0 || n < 2 * c.T) {
        chk.error(path + ".T", "T = " + std::to_string(c.T) + " must divide " + key + " = " + std::to_string(n) +
                                   " with at least two blocks");
      }
    }
    cfg.candidates.push_back(c);
  }

  const json train = doc.value("train", json::object());
  chk.unknown_keys(train, "train", {"dynamics", "coarse"});
  if (train.is_object()) {
    if (train.contains("dynamics")) {
      chk.guard("train.dynamics", [&] { cfg.stage1 = train_config_from_json(train.at("dynamics")); });
    }
    if (train.contains("coarse")) {
      chk.guard("train.coarse", [&] { cfg.stage2 = train_config_from_json(train.at("coarse")); });
    }
  }
  cfg.stage1.stage = Stage::dynamics;
  cfg.stage2.stage = Stage::coarse;
  cfg.baseline = chk.get(doc, "baseline", false, "");
  cfg.seeds = chk.get<std::vector<std::uint64_t>>(doc, "seeds", {}, "");
  if (cfg.seeds.empty()) chk.error("seeds", "must list at least one seed");
  const json analysis = doc.value("analysis", json::object());
  chk.unknown_keys(analysis, "analysis", {"threshold", "binarize_macro"});
  cfg.threshold = chk.get(analysis, "threshold", cfg.threshold, "analysis");
  if (!(cfg.threshold > 0)) chk.error("analysis.threshold", "must be positive");
  cfg.binarize_macro = chk.get(analysis, "binarize_macro", cfg.kind == SystemKind::ca, "analysis");
  cfg.assertions = doc.value("assertions", json::array());
  if (!cfg.assertions.is_array()) chk.error("assertions", "must be a list");
  cfg.output_dir = chk.get<std::string>(doc, "output_dir", "", "");
  chk.finish();
  return cfg;
}

ExperimentConfig load_experiment(const fs::path& path) { return experiment_from_json(read_json(path)); }

fs::path resolve_run_dir(const ExperimentConfig& cfg, const std::optional<fs::path>& out) {
  if (out) return *out;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* root = std::getenv("SELFSIM_OUTPUT_ROOT"); root && *root) return fs::path(root) / cfg.name;
  return fs::path("runs") / cfg.name;
}

namespace {

struct Variant {
  std::string id;
  int rule = 0;
  DiffusionDataset dataset;
  double eta = 0.0;
};

std::vector<Variant> variants(const ExperimentConfig& cfg) {
  std::vector<Variant> out;
  switch (cfg.kind) {
    case SystemKind::ca:
      for (int r : cfg.ca.rules) out.push_back({"rule" + std::to_string(r), r, {}, 0.0});
      break;
    case SystemKind::diffusion:
      for (const auto& d : cfg.diffusion.datasets) out.push_back({d.id, 0, d, 0.0});
      break;
    case SystemKind::vicsek:
      for (double eta : cfg.vicsek.etas) out.push_back({format_eta(eta), 0, {}, eta});
      break;
  }
  return out;
}

struct CellData {
  std::vector<Trajectory> stage1;
  std::vector<Trajectory> stage2;
  std::vector<Trajectory> eval;
  /// Diffusion: single centred spike for the scaling fit.
  std::optional<Trajectory> msd;
  /// Vicsek: order parameter per evaluation snapshot.
  std::vector<double> order;
};

CellData simulate_cell(const ExperimentConfig& cfg, const Variant& v, std::uint64_t seed) {
  CellData data;
  const std::uint64_t base = derive_seed(seed, fnv1a(v.id));
  switch (cfg.kind) {
    case SystemKind::ca: {
      const CARule rule(v.rule);
      Rng r1(derive_seed(base, 1));
      for (std::size_t i = 0; i < cfg.ca.stage1_trajectories; ++i) {
        data.stage1.push_back(eca_run(rule, random_binary_field(cfg.ca.stage1_lattice, r1), cfg.ca.stage1_steps));
      }
      Rng r2(derive_seed(base, 2));
      for (std::size_t i = 0; i < cfg.ca.trajectories; ++i) {
        data.stage2.push_back(eca_run(rule, random_binary_field(cfg.ca.lattice, r2), cfg.ca.frames - 1));
      }
      Rng r3(derive_seed(base, 3));
      for (std::size_t i = 0; i < cfg.ca.eval_trajectories; ++i) {
        data.eval.push_back(eca_run(rule, random_binary_field(cfg.ca.lattice, r3), cfg.ca.frames - 1));
      }
      break;
    }
    case SystemKind::diffusion: {
      DiffusionConfig dc = cfg.diffusion.base;
      dc.dt = v.dataset.dt;
      const auto run = [&](const Field& init) {
        return v.dataset.source == "analytic" ? diffusion_run_analytic(init, dc, cfg.diffusion.frames)
                                              : diffusion_run_fd(init, dc, cfg.diffusion.frames);
      };
      Rng r1(derive_seed(base, 1));
      for (std::size_t i = 0; i < cfg.diffusion.trajectories; ++i) data.stage1.push_back(run(diffusion_initial(dc, r1)));
      data.stage2 = data.stage1;
      Rng r3(derive_seed(base, 3));
      for (std::size_t i = 0; i < cfg.diffusion.eval_trajectories; ++i) {
        data.eval.push_back(run(diffusion_initial(dc, r3)));
      }
      Field spike({dc.sites()}, 1);
      spike[dc.sites() / 2] = 1.0;
      data.msd = run(spike);
      break;
    }
    case SystemKind::vicsek: {
      VicsekConfig vc = cfg.vicsek.base;
      vc.eta = v.eta;
      Rng r1(derive_seed(base, 1));
      for (std::size_t i = 0; i < cfg.vicsek.trajectories; ++i) {
        data.stage1.push_back(vicsek_run(vc, r1, cfg.vicsek.warmup, cfg.vicsek.frames));
      }
      data.stage2 = data.stage1;
      Rng r3(derive_seed(base, 3));
      for (std::size_t i = 0; i < cfg.vicsek.eval_trajectories; ++i) {
        data.eval.push_back(vicsek_run(vc, r3, cfg.vicsek.warmup, cfg.vicsek.frames, &data.order));
      }
      break;
    }
  }
  return data;
}

class Manifest {
 public:
  Manifest(fs::path path, std::string hash) : path_(std::move(path)), hash_(std::move(hash)) {
    if (fs::exists(path_)) {
      doc_ = read_json(path_);
      if (doc_.value("config_hash", std::string()) != hash_) doc_ = json();
    }
    if (doc_.is_null()) {
      doc_ = {{"config_hash", hash_}, {"tool_version", tool_version()}, {"created", now_iso8601()},
              {"stages", json::object()}};
    }
    doc_["updated"] = now_iso8601();
    save();
  }

  bool done(const std::string& key, const fs::path& root) const {
    std::lock_guard lock(mu_);
    if (!doc_["stages"].contains(key)) return false;
    const json& s = doc_["stages"][key];
    if (s.value("status", std::string()) != "done") return false;
    for (const auto& p : s.value("paths", json::array())) {
      if (!fs::exists(root / p.get<std::string>())) return false;
    }
    return true;
  }

  void start(const std::string& key) {
    std::lock_guard lock(mu_);
    doc_["stages"][key] = {{"status", "running"}, {"started", now_iso8601()}, {"paths", json::array()}};
    save();
  }

  void finish(const std::string& key, const std::vector<std::string>& paths) {
    std::lock_guard lock(mu_);
    json& s = doc_["stages"][key];
    s["status"] = "done";
    s["finished"] = now_iso8601();
    s["paths"] = paths;
    doc_["updated"] = now_iso8601();
    save();
  }

  void fail(const std::string& key, const std::string& error) {
    std::lock_guard lock(mu_);
    json& s = doc_["stages"][key];
    s["status"] = "failed";
    s["finished"] = now_iso8601();
    s["error"] = error;
    save();
  }

 private:
  void save() const { write_json(doc_, path_); }

  fs::path path_;
  std::string hash_;
  json doc_;
  mutable std::mutex mu_;
};

struct Cell {
  Variant variant;
  std::uint64_t seed;
  fs::path rel;  // relative to the run directory
};

class Runner {
 public:
  Runner(const ExperimentConfig& cfg, fs::path dir, RunOptions opt)
      : cfg_(cfg), dir_(std::move(dir)), opt_(opt), manifest_(dir_ / "manifest.json", cfg.hash()) {}

  RunResult run() {
    std::vector<Cell> cells;
    for (const auto& v : variants(cfg_)) {
      for (auto seed : cfg_.seeds) cells.push_back({v, seed, fs::path(v.id) / ("seed" + std::to_string(seed))});
    }
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(cells[i]);
    };
    const std::size_t jobs = std::max<std::size_t>(1, std::min(opt_.jobs, cells.size()));
    if (jobs == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    RunResult r;
    r.directory = dir_;
    r.stages_run = run_;
    r.stages_skipped = skipped_;
    r.failed = failed_;
    return r;
  }

 private:
  void log(const std::string& msg) {
    if (!opt_.verbose) return;
    std::lock_guard lock(log_mu_);
    std::cerr << "[" << cfg_.name << "] " << msg << '\n';
  }

  // Runs `body` unless the manifest already records `key` as done. Returns
  // false when the stage failed.
  template <class F>
  bool stage(const std::string& key, F&& body) {
    if (manifest_.done(key, dir_)) {
      ++skipped_;
      return true;
    }
    manifest_.start(key);
    log(key);
    try {
      std::vector<std::string> paths = body();
      manifest_.finish(key, paths);
      ++run_;
      return true;
    } catch (const InvariantError&) {
      throw;
    } catch (const std::exception& e) {
      manifest_.fail(key, e.what());
      std::lock_guard lock(log_mu_);
      failed_.push_back(key + ": " + e.what());
      std::cerr << "stage " << key << " failed: " << e.what() << '\n';
      return false;
    }
  }

  std::string rel(const fs::path& p) const { return fs::relative(p, dir_).generic_string(); }

  void run_cell(const Cell& cell) {
    const fs::path root = dir_ / cell.rel;
    const std::string prefix = cell.rel.generic_string() + "/";
    std::optional<CellData> data;
    const auto ensure_data = [&]() -> CellData& {
      if (!data) data = simulate_cell(cfg_, cell.variant, cell.seed);
      return *data;
    };

    if (!stage(prefix + "simulate", [&] {
          CellData& d = ensure_data();
          fs::create_directories(root / "data");
          save_trajectory(d.eval.front(), root / "data" / "sample_micro.traj");
          write_pgm(d.eval.front(), root / "data" / "sample_micro.pgm");
          json summary = {{"stage1_trajectories", d.stage1.size()},
                          {"stage2_trajectories", d.stage2.size()},
                          {"eval_trajectories", d.eval.size()}};
          write_json(summary, root / "data" / "summary.json");
          return std::vector<std::string>{rel(root / "data" / "sample_micro.traj"),
                                          rel(root / "data" / "summary.json")};
        })) {
      return;
    }
    if (opt_.stop_after == StopAfter::simulate) return;

    const fs::path s1 = root / "stage1";
    if (!stage(prefix + "dynamics", [&] {
          TrainConfig tc = cfg_.stage1;
          tc.seed = derive_seed(cell.seed, 11);
          if (opt_.verbose && tc.log_every == 0) tc.log_every = 50;
          DynamicsResult res = train_stage1(ensure_data().stage1, cfg_.dynamics, tc);
          fs::create_directories(s1);
          write_json({{"dynamics", to_json(cfg_.dynamics)}, {"train", to_json(tc)}}, s1 / "config.json");
          save_params(res.model.params(), s1 / "theta1.json");
          write_metrics_csv(res.report, s1 / "metrics.csv");
          json rep = to_json(res.report);
          if (cfg_.kind == SystemKind::ca) rep["heldout_accuracy"] = ca_accuracy(res.model, ensure_data());
          write_json(rep, s1 / "report.json");
          return std::vector<std::string>{rel(s1 / "config.json"), rel(s1 / "theta1.json"), rel(s1 / "metrics.csv"),
                                          rel(s1 / "report.json")};
        })) {
      return;
    }
    if (opt_.stop_after == StopAfter::dynamics) return;

    DynamicsModel dynamics(cfg_.dynamics);
    for (const auto& cand : cfg_.candidates) {
      CoarseConfig cc = cfg_.coarse;
      cc.spec = cand;
      const fs::path cdir = root / candidate_dir(cand);
      const bool trained = stage(prefix + candidate_dir(cand) + "/coarse", [&] {
        dynamics.params() = load_params(s1 / "theta1.json");
        TrainConfig tc = cfg_.stage2;
        tc.seed = derive_seed(cell.seed, 13 + 31 * cand.S + 977 * cand.T);
        CoarseResult res = train_stage2(ensure_data().stage2, dynamics, cc, tc);
        fs::create_directories(cdir);
        write_json({{"dynamics", to_json(cfg_.dynamics)}, {"coarse", to_json(cc)}, {"train", to_json(tc)}},
                   cdir / "config.json");
        save_params(dynamics.params(), cdir / "theta1.json");
        save_params(res.encoder.params(), cdir / "theta2.json");
        save_params(res.decoder.params(), cdir / "theta3.json");
        write_metrics_csv(res.report, cdir / "metrics.csv");
        write_json(to_json(res.report), cdir / "report.json");
        return std::vector<std::string>{rel(cdir / "config.json"), rel(cdir / "theta1.json"),
                                        rel(cdir / "theta2.json"), rel(cdir / "theta3.json"),
                                        rel(cdir / "metrics.csv"), rel(cdir / "report.json")};
      });
      if (cfg_.baseline) {
        const fs::path bdir = root / ("baseline_" + candidate_dir(cand));
        stage(prefix + "baseline_" + candidate_dir(cand) + "/joint_nonself", [&] {
          TrainConfig tc = cfg_.stage2;
          tc.stage = Stage::joint_nonself;
          tc.seed = derive_seed(cell.seed, 13 + 31 * cand.S + 977 * cand.T);
          NonSelfResult res = train_non_self_similar(ensure_data().stage2, cfg_.dynamics, cc, tc);
          fs::create_directories(bdir);
          write_json({{"dynamics", to_json(cfg_.dynamics)}, {"coarse", to_json(cc)}, {"train", to_json(tc)}},
                     bdir / "config.json");
          save_params(res.macro_dynamics.params(), bdir / "theta1.json");
          save_params(res.encoder.params(), bdir / "theta2.json");
          save_params(res.decoder.params(), bdir / "theta3.json");
          write_metrics_csv(res.report, bdir / "metrics.csv");
          write_json(to_json(res.report), bdir / "report.json");
          return std::vector<std::string>{rel(bdir / "config.json"), rel(bdir / "theta1.json"),
                                          rel(bdir / "theta2.json"), rel(bdir / "theta3.json"),
                                          rel(bdir / "metrics.csv"), rel(bdir / "report.json")};
        });
      }
      if (!trained || opt_.stop_after == StopAfter::coarse) continue;

      stage(prefix + candidate_dir(cand) + "/analyze", [&] {
        dynamics.params() = load_params(cdir / "theta1.json");
        EncoderModel enc(cc);
        DecoderModel dec(cc);
        enc.params() = load_params(cdir / "theta2.json");
        dec.params() = load_params(cdir / "theta3.json");
        return analyze(ensure_data(), cell, cand, dynamics, enc, dec, cdir);
      });
    }
  }

  double ca_accuracy(const DynamicsModel& model, const CellData& d) {
    std::size_t hit = 0;
    std::size_t total = 0;
    for (const auto& tr : d.eval) {
      for (std::size_t t = 0; t + 1 < tr.length(); ++t) {
        const Field pred = model.step(tr[t]);
        for (std::size_t i = 0; i < pred.sites(); ++i) {
          hit += ((pred[i] > 0.5 ? 1.0 : 0.0) == tr[t + 1][i]) ? 1 : 0;
          ++total;
        }
      }
    }
    return static_cast<double>(hit) / static_cast<double>(total);
  }

  std::vector<std::string> analyze(const CellData& d, const Cell& cell, const CoarseGrainSpec& cand,
                                   const DynamicsModel& dynamics, const EncoderModel& enc, const DecoderModel& dec,
                                   const fs::path& cdir) {
    ConsistencyOptions copt;
    copt.binarize_macro = cfg_.binarize_macro;
    const double value = consistency(d.eval, dynamics, enc, copt);
    const double variance = encoder_output_variance(enc, d.eval);
    const bool trivial = !(variance >= kTrivialVarianceThreshold);
    json out = {{"system_id", cell.variant.id},
                {"seed", cell.seed},
                {"S", cand.S},
                {"T", cand.T},
                {"consistency", value},
                {"encoder_variance", variance},
                {"trivial_macro", trivial},
                {"verdict", to_string(classify_self_similar(value, trivial, cfg_.threshold))}};
    std::vector<std::string> paths{rel(cdir / "analysis.json")};

    const MacroPattern pattern = macro_pattern(d.eval.front(), enc, cfg_.kind == SystemKind::ca);
    save_trajectory(pattern.macro, cdir / "macro_pattern.traj");
    write_pgm(pattern.macro, cdir / "macro_pattern.pgm");
    paths.push_back(rel(cdir / "macro_pattern.traj"));
    if (pattern.binary) {
      write_pgm(*pattern.binary, cdir / "macro_pattern_binary.pgm");
      out["macro_rule_agreement"] = rule_agreement(*pattern.binary, CARule(cell.variant.rule));
    }

    if (cfg_.kind == SystemKind::diffusion && d.msd) {
      MsdOptions micro_opt;
      micro_opt.quantity = "msd_vs_t_micro";
      const ScalingFit micro = msd_slope(*d.msd, micro_opt);
      const Trajectory macro = enc.encode(*d.msd);
      Shape zero_shape{1, 1, cand.T, d.msd->frames.front().sites()};
      const Tensor zero_response = enc.encode(Tensor(zero_shape, 0.0));
      MsdOptions macro_opt;
      macro_opt.quantity = "msd_vs_t_macro";
      macro_opt.spatial_scale = static_cast<double>(cand.S);
      macro_opt.time_scale = static_cast<double>(cand.T);
      macro_opt.baseline = zero_response[0];
      const ScalingFit mac = msd_slope(macro, macro_opt);
      const auto fit_json = [](const ScalingFit& f) {
        return json{{"quantity", f.quantity}, {"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}};
      };
      out["msd_micro"] = fit_json(micro);
      out["msd_macro"] = fit_json(mac);
      out["analytic_slope"] = 2.0 * cfg_.diffusion.base.D;
    }
    if (cfg_.kind == SystemKind::vicsek) {
      std::vector<double> dyn;
      std::vector<double> rec;
      for (const auto& tr : d.eval) {
        const auto a = dynamics_errors(tr, dynamics);
        const auto b = reconstruction_errors(tr, dynamics, enc, dec);
        dyn.insert(dyn.end(), a.begin(), a.end());
        rec.insert(rec.end(), b.begin(), b.end());
      }
      out["eta"] = cell.variant.eta;
      out["order_parameter"] = d.order;
      out["dynamics_mse"] = dyn;
      out["reconstruction_mse"] = rec;
    }
    write_json(out, cdir / "analysis.json");
    return paths;
  }

  const ExperimentConfig& cfg_;
  fs::path dir_;
  RunOptions opt_;
  Manifest manifest_;
  std::mutex log_mu_;
  std::atomic<std::size_t> run_{0};
  std::atomic<std::size_t> skipped_{0};
  std::vector<std::string> failed_;
};

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const fs::path& run_dir, const RunOptions& options) {
  fs::create_directories(run_dir);
  json stored = cfg.canonical();
  stored["config_hash"] = cfg.hash();
  write_json(stored, run_dir / "config.json");
  Runner runner(cfg, run_dir, options);
  RunResult result = runner.run();
  if (options.stop_after == StopAfter::analyze) report(run_dir);
  return result;
}

namespace {

struct AnalysisRow {
  json doc;
  std::string system_id;
  std::uint64_t seed;
  std::size_t S;
  std::size_t T;
};

double number(const json& doc, const std::string& key) {
  const auto it = doc.find(key);
  return it != doc.end() && it->is_number() ? it->get<double>() : std::nan("");
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

// Consistency per (system, S, T) across seeds: mean, sample std, trivial
// when any seed's macro state was trivial.
struct Aggregate {
  std::string system_id;
  std::size_t S = 0;
  std::size_t T = 0;
  std::vector<double> values;
  bool trivial = false;
};

std::vector<Aggregate> aggregate(const std::vector<AnalysisRow>& rows) {
  std::map<std::tuple<std::string, std::size_t, std::size_t>, Aggregate> groups;
  std::vector<std::tuple<std::string, std::size_t, std::size_t>> order;
  for (const auto& r : rows) {
    const auto key = std::make_tuple(r.system_id, r.S, r.T);
    if (!groups.contains(key)) {
      order.push_back(key);
      groups[key] = {r.system_id, r.S, r.T, {}, false};
    }
    groups[key].values.push_back(r.doc.at("consistency").get<double>());
    groups[key].trivial = groups[key].trivial || r.doc.at("trivial_macro").get<bool>();
  }
  std::vector<Aggregate> out;
  for (const auto& k : order) out.push_back(groups[k]);
  return out;
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return std::nan("");
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

bool check_assertion(const json& a, const std::vector<AnalysisRow>& rows, const std::vector<Aggregate>& agg,
                     const std::vector<EtaRow>& eta_rows, double threshold, std::string& why) {
  const std::string type = a.value("type", std::string());
  const auto find_agg = [&](const std::string& id, std::size_t S, std::size_t T) -> const Aggregate* {
    for (const auto& g : agg) {
      if (g.system_id == id && g.S == S && g.T == T) return &g;
    }
    return nullptr;
  };
  const std::size_t S = a.value("S", std::size_t{0});
  const std::size_t T = a.value("T", std::size_t{0});
  if (type == "verdict" || type == "consistency_below" || type == "consistency_above") {
    const std::string id = a.value("system_id", std::string());
    const Aggregate* g = find_agg(id, S, T);
    if (!g) {
      why = "no results for " + id + " S=" + std::to_string(S) + " T=" + std::to_string(T);
      return false;
    }
    const double m = mean_of(g->values);
    if (type == "verdict") {
      const std::string got = to_string(classify_self_similar(m, g->trivial, threshold));
      why = id + " S=" + std::to_string(S) + " T=" + std::to_string(T) + ": verdict " + got + " (consistency " +
            fmt(m) + "), expected " + a.value("expect", std::string());
      return got == a.value("expect", std::string());
    }
    const double limit = a.value("value", 0.0);
    why = id + " S=" + std::to_string(S) + " T=" + std::to_string(T) + ": consistency " + fmt(m) +
          (type == "consistency_below" ? " < " : " > ") + fmt(limit);
    return type == "consistency_below" ? m < limit : m > limit;
  }
  if (type == "consistency_less") {
    const std::string lo = a.value("lower", std::string());
    const std::string hi = a.value("higher", std::string());
    std::map<std::uint64_t, std::pair<double, double>> per_seed;
    std::map<std::uint64_t, int> seen;
    for (const auto& r : rows) {
      if (r.S != S || r.T != T) continue;
      const double v = r.doc.at("consistency").get<double>();
      if (r.system_id == lo) {
        per_seed[r.seed].first = v;
        seen[r.seed] |= 1;
      }
      if (r.system_id == hi) {
        per_seed[r.seed].second = v;
        seen[r.seed] |= 2;
      }
    }
    std::size_t ok = 0;
    std::size_t total = 0;
    for (const auto& [seed, pair] : per_seed) {
      if (seen[seed] != 3) continue;
      ++total;
      ok += pair.first < pair.second ? 1 : 0;
    }
    const std::size_t need = a.value("min_seeds", total);
    why = "consistency(" + lo + ") < consistency(" + hi + ") in " + std::to_string(ok) + "/" + std::to_string(total) +
          " seeds, need " + std::to_string(need);
    return total > 0 && ok >= need;
  }
  if (type == "slope_ratio") {
    const std::string id = a.value("system_id", std::string());
    const double lo = a.value("min", 0.0);
    const double hi = a.value("max", 0.0);
    bool any = false;
    bool all = true;
    std::string detail;
    for (const auto& r : rows) {
      if (r.system_id != id || r.S != S || r.T != T || !r.doc.contains("msd_macro")) continue;
      any = true;
      const double ratio =
          r.doc["msd_macro"]["slope"].get<double>() / r.doc["msd_micro"]["slope"].get<double>();
      detail += " " + fmt(ratio);
      all = all && ratio >= lo && ratio <= hi;
    }
    why = id + " macro/micro MSD slope ratios:" + detail + " expected in [" + fmt(lo) + ", " + fmt(hi) + "]";
    return any && all;
  }
  if (type == "micro_slope") {
    const std::string id = a.value("system_id", std::string());
    const double tol = a.value("tolerance", 0.02);
    bool any = false;
    bool all = true;
    std::string detail;
    for (const auto& r : rows) {
      if (r.system_id != id || r.S != S || r.T != T || !r.doc.contains("msd_micro")) continue;
      any = true;
      const double got = r.doc["msd_micro"]["slope"].get<double>();
      const double want = r.doc["analytic_slope"].get<double>();
      detail += " " + fmt(got);
      all = all && std::abs(got - want) <= tol * std::abs(want);
    }
    why = id + " micro MSD slopes:" + detail + " expected within " + fmt(100 * tol) + "% of 2D";
    return any && all;
  }
  if (type == "framework_beats_baseline" || type == "baseline_trivial") {
    const std::string id = a.value("system_id", std::string());
    std::size_t ok = 0;
    std::size_t total = 0;
    for (const auto& r : rows) {
      if (r.system_id != id || r.S != S || r.T != T || !r.doc.contains("baseline_val_loss")) continue;
      ++total;
      if (type == "baseline_trivial") {
        ok += r.doc["baseline_trivial"].get<bool>() ? 1 : 0;
      } else {
        ok += number(r.doc, "framework_val_loss") < number(r.doc, "baseline_val_loss") ? 1 : 0;
      }
    }
    const std::size_t need = a.value("min_seeds", total);
    why = id + (type == "baseline_trivial" ? " baseline collapsed to a trivial state in "
                                            : " shared-dynamics loss below baseline in ") +
          std::to_string(ok) + "/" + std::to_string(total) + " seeds, need " + std::to_string(need);
    return total > 0 && ok >= need;
  }
  if (type == "eta_rows") {
    const std::size_t count = a.value("count", std::size_t{0});
    why = "eta_scan rows " + std::to_string(eta_rows.size()) + ", expected " + std::to_string(count);
    return eta_rows.size() == count;
  }
  why = "unknown assertion type '" + type + "'";
  return false;
}

}  // namespace

ReportResult report(const fs::path& run_dir) {
  if (!fs::exists(run_dir / "manifest.json") || !fs::exists(run_dir / "config.json")) {
    ReportResult r;
    r.missing.push_back("manifest.json (no run in " + run_dir.string() + ")");
    r.summary = "no completed run found in " + run_dir.string() + "\n";
    return r;
  }
  json stored = read_json(run_dir / "config.json");
  stored.erase("config_hash");
  const ExperimentConfig cfg = experiment_from_json(stored);
  const json manifest = read_json(run_dir / "manifest.json");

  ReportResult result;
  std::vector<AnalysisRow> rows;
  std::vector<EtaRun> eta_runs;
  std::vector<std::string> scaling_lines;
  std::ostringstream summary;
  summary << "experiment " << cfg.name << " (" << kind_name(cfg.kind) << "), config " << cfg.hash() << "\n";
  if (manifest.value("config_hash", std::string()) != cfg.hash()) {
    result.missing.push_back("manifest belongs to a different config hash");
  }
  const json stages = manifest.value("stages", json::object());
  const auto stage_ok = [&](const std::string& key) {
    if (!stages.contains(key) || stages[key].value("status", std::string()) != "done") {
      result.missing.push_back(key);
      return false;
    }
    return true;
  };

  summary << "\nstage-1 dynamics\n";
  for (const auto& v : variants(cfg)) {
    for (auto seed : cfg.seeds) {
      const fs::path rel = fs::path(v.id) / ("seed" + std::to_string(seed));
      const std::string prefix = rel.generic_string() + "/";
      stage_ok(prefix + "simulate");
      if (!stage_ok(prefix + "dynamics")) continue;
      const json rep = read_json(run_dir / rel / "stage1" / "report.json");
      summary << "  " << std::left << std::setw(14) << v.id << " seed " << seed << "  best val "
              << fmt(number(rep, "best_val_loss")) << "  epochs " << rep.value("epochs_run", 0);
      if (rep.contains("heldout_accuracy")) summary << "  accuracy " << fmt(rep["heldout_accuracy"].get<double>());
      summary << "\n";
      for (const auto& cand : cfg.candidates) {
        const std::string cd = candidate_dir(cand);
        if (!stage_ok(prefix + cd + "/coarse")) continue;
        if (cfg.baseline) stage_ok(prefix + "baseline_" + cd + "/joint_nonself");
        if (!stage_ok(prefix + cd + "/analyze")) continue;
        AnalysisRow row{read_json(run_dir / rel / cd / "analysis.json"), v.id, seed, cand.S, cand.T};
        const fs::path bdir = run_dir / rel / ("baseline_" + cd);
        if (cfg.baseline && fs::exists(bdir / "report.json")) {
          const json own = read_json(run_dir / rel / cd / "report.json");
          const json base = read_json(bdir / "report.json");
          row.doc["framework_val_loss"] = number(own, "best_val_loss");
          row.doc["baseline_val_loss"] = number(base, "best_val_loss");
          row.doc["baseline_encoder_variance"] = number(base, "encoder_variance");
          row.doc["baseline_trivial"] = base.value("trivial_macro", false);
        }
        if (row.doc.contains("msd_micro")) {
          for (const char* key : {"msd_micro", "msd_macro"}) {
            const json& f = row.doc[key];
            scaling_lines.push_back(f["quantity"].get<std::string>() + "," + fmt(f["slope"].get<double>()) + "," +
                                    fmt(f["intercept"].get<double>()) + "," + fmt(f["r2"].get<double>()) + "," +
                                    v.id + "," + std::to_string(seed) + "," + std::to_string(cand.S) + "," +
                                    std::to_string(cand.T));
          }
        }
        if (row.doc.contains("dynamics_mse")) {
          EtaRun er;
          er.eta = v.eta;
          er.seed = seed;
          er.order_parameter = row.doc["order_parameter"].get<std::vector<double>>();
          er.dynamics_mse = row.doc["dynamics_mse"].get<std::vector<double>>();
          er.reconstruction_mse = row.doc["reconstruction_mse"].get<std::vector<double>>();
          const json crep = read_json(run_dir / rel / cd / "report.json");
          er.converged = crep.value("converged", false);
          eta_runs.push_back(std::move(er));
        }
        rows.push_back(std::move(row));
      }
    }
  }

  const auto agg = aggregate(rows);
  {
    std::ofstream os(run_dir / "consistency_report.csv");
    os << "system_id,S,T,consistency,verdict,consistency_std,seeds\n";
    for (const auto& g : agg) {
      const double m = mean_of(g.values);
      os << g.system_id << ',' << g.S << ',' << g.T << ',' << std::setprecision(10) << m << ','
         << to_string(classify_self_similar(m, g.trivial, cfg.threshold)) << ',' << fmt(sample_std(g.values)) << ','
         << g.values.size() << '\n';
    }
    std::ofstream by_seed(run_dir / "consistency_by_seed.csv");
    by_seed << "system_id,S,T,seed,consistency,encoder_variance,trivial_macro,verdict\n";
    for (const auto& r : rows) {
      by_seed << r.system_id << ',' << r.S << ',' << r.T << ',' << r.seed << ',' << std::setprecision(10)
              << r.doc["consistency"].get<double>() << ',' << r.doc["encoder_variance"].get<double>() << ','
              << (r.doc["trivial_macro"].get<bool>() ? 1 : 0) << ',' << r.doc["verdict"].get<std::string>() << '\n';
    }
  }
  if (!agg.empty()) {
    summary << "\nconsistency (threshold " << fmt(cfg.threshold) << ")\n";
    for (const auto& g : agg) {
      const double m = mean_of(g.values);
      summary << "  " << std::left << std::setw(14) << g.system_id << " S=" << g.S << " T=" << g.T << "  "
              << std::setw(12) << fmt(m) << " " << to_string(classify_self_similar(m, g.trivial, cfg.threshold))
              << "\n";
    }
  }
  if (!scaling_lines.empty()) {
    std::ofstream os(run_dir / "scaling.csv");
    os << "quantity,slope,intercept,r2,system_id,seed,S,T\n";
    summary << "\ndiffusion scaling (slope of variance vs t)\n";
    for (const auto& l : scaling_lines) {
      os << l << '\n';
      summary << "  " << l << "\n";
    }
  }
  bool baseline_header = false;
  for (const auto& r : rows) {
    if (!r.doc.contains("baseline_val_loss")) continue;
    if (!baseline_header) {
      summary << "\nshared dynamics vs jointly trained baseline (validation loss, baseline encoder variance)\n";
      baseline_header = true;
    }
    summary << "  " << std::left << std::setw(14) << r.system_id << " seed " << r.seed << " S=" << r.S << " T=" << r.T
            << "  " << fmt(number(r.doc, "framework_val_loss")) << " vs "
            << fmt(number(r.doc, "baseline_val_loss")) << "  var "
            << fmt(number(r.doc, "baseline_encoder_variance"))
            << (r.doc["baseline_trivial"].get<bool>() ? "  trivial" : "") << "\n";
  }
  std::vector<EtaRow> eta_rows;
  if (!eta_runs.empty()) {
    eta_rows = eta_scan(eta_runs);
    write_eta_scan_csv(eta_rows, run_dir / "eta_scan.csv");
    summary << "\neta scan: eta phi_mean dyn_median rec_median converged\n";
    for (const auto& r : eta_rows) {
      summary << "  " << fmt(r.eta) << "  " << fmt(r.phi_mean) << "  " << fmt(r.dynamics.median) << "  "
              << fmt(r.reconstruction.median) << "  " << (r.converged ? "yes" : "no") << "\n";
    }
  }

  if (!result.missing.empty()) {
    summary << "\nmissing or failed stages:\n";
    for (const auto& m : result.missing) summary << "  " << m << "\n";
  }
  summary << "\nassertions\n";
  for (const auto& a : cfg.assertions) {
    ++result.assertions;
    std::string why;
    const bool ok = check_assertion(a, rows, agg, eta_rows, cfg.threshold, why);
    summary << "  " << (ok ? "PASS " : "FAIL ") << why << "\n";
    if (!ok) result.failed_assertions.push_back(why);
  }
  if (cfg.assertions.empty()) summary << "  (none configured)\n";
  result.summary = summary.str();
  std::ofstream(run_dir / "summary.txt") << result.summary;
  return result;
}

}  // namespace selfsim
