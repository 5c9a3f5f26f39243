#pragma once

// Helpers shared by the unit and acceptance tests.

#include <map>
#include <string>
#include <vector>

#include "selfsim/models.hpp"
#include "selfsim/params.hpp"
#include "selfsim/rng.hpp"
#include "selfsim/tape.hpp"

namespace selfsim::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

/// All parameters of the given stores concatenated in store then name order.
inline Tensor flatten(const std::vector<const ParamStore*>& stores) {
  std::vector<double> flat;
  for (const auto* s : stores) {
    for (const auto& [name, t] : *s) flat.insert(flat.end(), t.values().begin(), t.values().end());
  }
  const std::size_t n = flat.size();
  return Tensor({n}, std::move(flat));
}

/// Inverse of flatten on the tape: one BoundParams per store, each entry a
/// reshaped slice of `leaf`.
inline std::vector<BoundParams> bind_flat(ad::Tape& tape, ad::Var leaf, const std::vector<const ParamStore*>& stores) {
  std::vector<BoundParams> out;
  std::size_t offset = 0;
  for (const auto* s : stores) {
    std::map<std::string, ad::Var> vars;
    for (const auto& [name, t] : *s) {
      vars[name] = ad::reshape(tape, ad::slice_axis(tape, leaf, 0, offset, offset + t.size()), t.shape());
      offset += t.size();
    }
    out.emplace_back(std::move(vars));
  }
  return out;
}

/// Random 0/1 tensor.
inline Tensor random_block(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.bit() ? 1.0 : 0.0;
  return t;
}

}  // namespace selfsim::testing
