#pragma once

#include <functional>

#include "selfsim/tape.hpp"
#include "selfsim/tensor.hpp"

namespace selfsim {

/// Builds a scalar node from a leaf holding the evaluation point.
using ScalarFn = std::function<ad::Var(ad::Tape&, ad::Var)>;

/// Compares the tape gradient of `fn` at `point` with central differences:
/// max over coordinates of |analytic - numeric| / (|analytic| + 1e-8).
double finite_difference_check(const ScalarFn& fn, const Tensor& point, double eps = 1e-6);

}  // namespace selfsim
