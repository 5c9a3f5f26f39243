#include "selfsim/analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "selfsim/errors.hpp"
#include "selfsim/ops.hpp"

namespace selfsim {

namespace {

struct SquaredError {
  double sum = 0.0;
  std::size_t count = 0;
};

SquaredError consistency_terms(const Trajectory& micro, const DynamicsModel& dynamics, const EncoderModel& encoder,
                               const ConsistencyOptions& options) {
  const std::size_t T = encoder.spec().T;
  micro.validate(2 * T);
  const std::size_t usable = micro.length() - micro.length() % T;
  Tensor y = encoder.encode(micro.block(0, usable));
  if (options.binarize_macro) {
    for (auto& v : y.values()) v = v > 0.5 ? 1.0 : 0.0;
  }
  const std::size_t M = y.shape()[2];
  const Tensor path_a = dynamics.predict(slice_axis(y, 2, 0, M - 1), true);
  const Tensor path_b = slice_axis(y, 2, 1, M);
  SquaredError out;
  for (std::size_t i = 0; i < path_a.size(); ++i) {
    const double d = path_a[i] - path_b[i];
    out.sum += d * d;
  }
  out.count = path_a.size();
  return out;
}

std::size_t parse_index_end(std::size_t end, std::size_t length) { return end == 0 ? length : std::min(end, length); }

}  // namespace

double consistency(const Trajectory& micro, const DynamicsModel& dynamics, const EncoderModel& encoder,
                   const ConsistencyOptions& options) {
  const auto t = consistency_terms(micro, dynamics, encoder, options);
  return t.sum / static_cast<double>(t.count);
}

double consistency(const std::vector<Trajectory>& micro, const DynamicsModel& dynamics,
                   const EncoderModel& encoder, const ConsistencyOptions& options) {
  if (micro.empty()) throw UsageError("consistency needs at least one trajectory");
  SquaredError total;
  for (const auto& tr : micro) {
    const auto t = consistency_terms(tr, dynamics, encoder, options);
    total.sum += t.sum;
    total.count += t.count;
  }
  return total.sum / static_cast<double>(total.count);
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::self_similar: return "self_similar";
    case Verdict::not_self_similar: return "not_self_similar";
    case Verdict::trivial_macro: return "trivial_macro";
  }
  return "unknown";
}

Verdict classify_self_similar(double value, bool trivial_macro, double threshold) {
  if (!(threshold > 0)) throw ConfigError("self-similarity threshold must be positive");
  if (trivial_macro) return Verdict::trivial_macro;
  return value < threshold ? Verdict::self_similar : Verdict::not_self_similar;
}

void ConsistencyReport::add(std::string system_id, std::size_t S, std::size_t T, double value, bool trivial) {
  rows.push_back({std::move(system_id), S, T, value, trivial, classify_self_similar(value, trivial, threshold)});
}

void write_consistency_csv(const ConsistencyReport& report, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << "system_id,S,T,consistency,verdict\n" << std::setprecision(10);
  for (const auto& r : report.rows) {
    os << r.system_id << ',' << r.S << ',' << r.T << ',' << r.consistency << ',' << to_string(r.verdict) << '\n';
  }
}

MacroPattern macro_pattern(const Trajectory& micro, const EncoderModel& encoder, bool binarize) {
  MacroPattern out{encoder.encode(micro), std::nullopt};
  if (binarize) {
    Trajectory b = out.macro;
    for (auto& f : b.frames) {
      for (auto& v : f.values()) v = v > 0.5 ? 1.0 : 0.0;
    }
    out.binary = std::move(b);
  }
  return out;
}

double rule_agreement(const Trajectory& binary, const CARule& rule) {
  binary.validate(2);
  std::size_t agree = 0;
  std::size_t total = 0;
  for (std::size_t t = 0; t + 1 < binary.length(); ++t) {
    const Field expected = eca_step(binary[t], rule);
    const Field& actual = binary[t + 1];
    for (std::size_t i = 0; i < expected.sites(); ++i) {
      agree += expected[i] == actual[i] ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(total);
}

ScalingFit linear_fit(const std::vector<double>& x, const std::vector<double>& y, std::string quantity) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("linear_fit needs at least two paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw DomainError("linear_fit: all x values are equal");
  ScalingFit fit;
  fit.quantity = std::move(quantity);
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy == 0.0 ? 1.0 : std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
  return fit;
}

std::vector<double> profile_variance(const Trajectory& traj, const MsdOptions& options) {
  traj.validate(1);
  if (traj[0].dims() != 1) throw DimensionError("profile_variance needs 1D fields");
  std::vector<double> out;
  out.reserve(traj.length());
  for (const auto& f : traj.frames) {
    const std::size_t n = f.sites();
    std::vector<double> p(n);
    double mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = f[i] - options.baseline;
      mass += p[i];
    }
    if (mass == 0.0 || !std::isfinite(mass)) throw DomainError("profile_variance: frame has zero total mass");
    for (auto& v : p) v /= mass;
    double s = 0.0;
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
      s += p[i] * std::sin(a);
      c += p[i] * std::cos(a);
    }
    double centre = std::atan2(s, c) * static_cast<double>(n) / (2.0 * std::numbers::pi);
    if (centre < 0) centre += static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = static_cast<double>(i) - centre;
      const double half = static_cast<double>(n) / 2.0;
      if (d > half) d -= static_cast<double>(n);
      if (d < -half) d += static_cast<double>(n);
      var += p[i] * d * d;
    }
    out.push_back(var * options.spatial_scale * options.spatial_scale);
  }
  return out;
}

ScalingFit msd_slope(const Trajectory& traj, const MsdOptions& options) {
  const auto var = profile_variance(traj, options);
  const std::size_t end = parse_index_end(options.end_frame, var.size());
  if (end <= options.first_frame + 1) throw UsageError("msd_slope needs at least two frames in the fit window");
  std::vector<double> t;
  std::vector<double> v;
  for (std::size_t k = options.first_frame; k < end; ++k) {
    t.push_back(static_cast<double>(k) * options.time_scale);
    v.push_back(var[k]);
  }
  return linear_fit(t, v, options.quantity);
}

void write_scaling_csv(const std::vector<ScalingFit>& fits, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << "quantity,slope,intercept,r2\n" << std::setprecision(10);
  for (const auto& f : fits) os << f.quantity << ',' << f.slope << ',' << f.intercept << ',' << f.r2 << '\n';
}

std::vector<double> dynamics_errors(const Trajectory& micro, const DynamicsModel& dynamics) {
  micro.validate(2);
  const std::size_t n = micro.length() - 1;
  const Tensor x = micro.block(0, n);
  const Tensor y = micro.block(1, n);
  const Tensor pred = dynamics.predict(x, true);
  const std::size_t channels = micro[0].channels();
  const std::size_t sites = micro[0].sites();
  std::vector<double> out(n, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t base = (c * n + t) * sites;
      for (std::size_t i = 0; i < sites; ++i) {
        const double d = pred[base + i] - y[base + i];
        out[t] += d * d;
      }
    }
  }
  for (auto& v : out) v /= static_cast<double>(channels * sites);
  return out;
}

std::vector<double> reconstruction_errors(const Trajectory& micro, const DynamicsModel& dynamics,
                                          const EncoderModel& encoder, const DecoderModel& decoder) {
  const std::size_t T = encoder.spec().T;
  micro.validate(2 * T);
  const std::size_t usable = micro.length() - micro.length() % T;
  const Tensor block = micro.block(0, usable);
  const Tensor y = encoder.encode(block);
  const Tensor rec = decoder.decode(dynamics.predict(y, true));
  const std::size_t M = usable / T;
  const std::size_t channels = micro[0].channels();
  const std::size_t sites = micro[0].sites();
  std::vector<double> out(M - 1, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t tau = 0; tau + 1 < M; ++tau) {
      for (std::size_t k = 0; k < T; ++k) {
        const double* p = rec.data() + (c * usable + tau * T + k) * sites;
        const double* a = block.data() + (c * usable + (tau + 1) * T + k) * sites;
        for (std::size_t i = 0; i < sites; ++i) out[tau] += (p[i] - a[i]) * (p[i] - a[i]);
      }
    }
  }
  for (auto& v : out) v /= static_cast<double>(channels * T * sites);
  return out;
}

BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) throw UsageError("box_stats needs at least one value");
  std::sort(values.begin(), values.end());
  const auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {values.front(), quantile(0.25), quantile(0.5), quantile(0.75), values.back()};
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("spearman needs at least two paired values");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(rx.size());
  my /= static_cast<double>(ry.size());
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::vector<EtaRow> eta_scan(const std::vector<EtaRun>& runs) {
  std::map<double, std::vector<const EtaRun*>> groups;
  for (const auto& r : runs) groups[r.eta].push_back(&r);
  std::vector<EtaRow> rows;
  for (const auto& [eta, group] : groups) {
    EtaRow row;
    row.eta = eta;
    std::vector<double> phi;
    std::vector<double> dyn;
    std::vector<double> rec;
    for (const EtaRun* r : group) {
      if (!r->converged) {
        ++row.excluded;
        row.converged = false;
        continue;
      }
      ++row.runs;
      if (!r->order_parameter.empty()) {
        phi.push_back(std::accumulate(r->order_parameter.begin(), r->order_parameter.end(), 0.0) /
                      static_cast<double>(r->order_parameter.size()));
      }
      dyn.insert(dyn.end(), r->dynamics_mse.begin(), r->dynamics_mse.end());
      rec.insert(rec.end(), r->reconstruction_mse.begin(), r->reconstruction_mse.end());
    }
    if (!phi.empty()) {
      const double n = static_cast<double>(phi.size());
      row.phi_mean = std::accumulate(phi.begin(), phi.end(), 0.0) / n;
      double ss = 0.0;
      for (double v : phi) ss += (v - row.phi_mean) * (v - row.phi_mean);
      row.phi_std = phi.size() > 1 ? std::sqrt(ss / (n - 1.0)) : std::nan("");
    } else {
      row.phi_mean = row.phi_std = std::nan("");
    }
    const BoxStats none{std::nan(""), std::nan(""), std::nan(""), std::nan(""), std::nan("")};
    row.dynamics = dyn.empty() ? none : box_stats(dyn);
    row.reconstruction = rec.empty() ? none : box_stats(rec);
    rows.push_back(row);
  }
  return rows;
}

void write_eta_scan_csv(const std::vector<EtaRow>& rows, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  const auto cell = [](double v) -> std::string {
    if (std::isnan(v)) return "";
    std::ostringstream s;
    s << std::setprecision(10) << v;
    return s.str();
  };
  os << "eta,phi_mean,phi_std,dyn_mse_q1,dyn_mse_median,dyn_mse_q3,rec_mse_q1,rec_mse_median,rec_mse_q3,converged\n";
  for (const auto& r : rows) {
    os << cell(r.eta) << ',' << cell(r.phi_mean) << ',' << cell(r.phi_std) << ',' << cell(r.dynamics.q1) << ','
       << cell(r.dynamics.median) << ',' << cell(r.dynamics.q3) << ',' << cell(r.reconstruction.q1) << ','
       << cell(r.reconstruction.median) << ',' << cell(r.reconstruction.q3) << ',' << (r.converged ? 1 : 0)
       << '\n';
  }
}

}  // namespace selfsim
