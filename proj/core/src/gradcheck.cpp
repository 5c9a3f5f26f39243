#include "selfsim/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "selfsim/errors.hpp"

namespace selfsim {

namespace {

double evaluate(const ScalarFn& fn, const Tensor& point) {
  ad::Tape tape;
  const ad::Var out = fn(tape, tape.constant(point));
  return tape.value(out).item();
}

}  // namespace

double finite_difference_check(const ScalarFn& fn, const Tensor& point, double eps) {
  if (!(eps > 0.0)) throw UsageError("finite_difference_check needs eps > 0");
  ad::Tape tape;
  const ad::Var x = tape.parameter(point);
  const ad::Var out = fn(tape, x);
  tape.backward(out);
  const Tensor analytic = tape.grad(x);

  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double up = evaluate(fn, probe);
    probe[i] = saved - eps;
    const double down = evaluate(fn, probe);
    probe[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-8));
  }
  return worst;
}

}  // namespace selfsim
