#include "selfsim/params.hpp"

#include <cmath>
#include <fstream>

#include "selfsim/errors.hpp"
#include "selfsim/rng.hpp"

namespace selfsim {

void ParamStore::set(const std::string& name, Tensor value) { tensors_[name] = std::move(value); }

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw UsageError("no parameter named '" + name + "'");
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw UsageError("no parameter named '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [name, _] : tensors_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

void ParamStore::init_uniform(Rng& rng, double half_width) {
  for (auto& [_, t] : tensors_) {
    for (auto& v : t.values()) v = rng.uniform(-half_width, half_width);
  }
}

nlohmann::json to_json(const ParamStore& params) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [name, t] : params) {
    doc[name] = {{"shape", t.shape()}, {"values", std::vector<double>(t.values().begin(), t.values().end())}};
  }
  return doc;
}

ParamStore params_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("parameter document must be a JSON object");
  ParamStore out;
  for (const auto& [name, entry] : doc.items()) {
    if (!entry.contains("shape") || !entry.contains("values")) {
      throw ConfigError("parameter '" + name + "' needs 'shape' and 'values'");
    }
    out.set(name, Tensor(entry.at("shape").get<Shape>(), entry.at("values").get<std::vector<double>>()));
  }
  return out;
}

void save_params(const ParamStore& params, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << to_json(params).dump(1) << '\n';
}

ParamStore load_params(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path.string());
  return params_from_json(nlohmann::json::parse(is));
}

BoundParams::BoundParams(ad::Tape& tape, const ParamStore& params, bool trainable) {
  for (const auto& [name, t] : params) {
    vars_[name] = trainable ? tape.parameter(t) : tape.constant(t);
  }
}

ad::Var BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw UsageError("no bound parameter named '" + name + "'");
  return it->second;
}

std::map<std::string, Tensor> BoundParams::gradients(const ad::Tape& tape) const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, v] : vars_) out.emplace(name, tape.grad(v));
  return out;
}

void adam_step(ParamStore& params, const GradMap& grads, AdamState& state) {
  for (const auto& [name, g] : grads) {
    const Tensor& p = params.at(name);
    require_same_shape(p, g, ("adam_step '" + name + "'").c_str());
    if (!g.all_finite()) throw NumericError("non-finite gradient for parameter '" + name + "'");
  }
  state.step += 1;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto [m_it, m_new] = state.first_moment.try_emplace(name, Tensor(p.shape(), 0.0));
    auto [v_it, v_new] = state.second_moment.try_emplace(name, Tensor(p.shape(), 0.0));
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace selfsim
