#include "tt2v/numerics/gradcheck.hpp"

#include <cmath>

namespace tt2v::num {

namespace {

Scalar evaluate(const TapedFn& f, const std::vector<NDArray>& point) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(point.size());
  for (const NDArray& p : point) vars.push_back(tape.leaf(p));
  Var out = f(tape, vars);
  Scalar v = tape.value(out).item();
  if (!std::isfinite(v)) throw NumericError("gradient_check: non-finite evaluation");
  return v;
}

}  // namespace

NDArray with_delta(const NDArray& a, Index flat_index, Scalar delta) {
  NDArray out = NDArray::uninit(a.shape());
  out.flat_mutable() = a.flat();
  out.mutable_data()[flat_index] += delta;
  return out;
}

Scalar gradient_check(const TapedFn& f, const std::vector<NDArray>& point, Scalar h) {
  if (h < 1e-6 || h > 1e-4)
    throw UsageError("gradient_check: h must lie in [1e-6, 1e-4]");

  Tape tape;
  std::vector<Var> vars;
  vars.reserve(point.size());
  for (const NDArray& p : point) vars.push_back(tape.leaf(p));
  Var out = f(tape, vars);
  if (tape.value(out).size() != 1)
    throw UsageError("gradient_check: map must produce a scalar");
  if (!std::isfinite(tape.value(out).item()))
    throw NumericError("gradient_check: non-finite evaluation");
  tape.backward(out);

  Scalar worst = 0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    NDArray analytic = tape.grad(vars[i]);
    for (Index j = 0; j < point[i].size(); ++j) {
      std::vector<NDArray> plus = point, minus = point;
      plus[i] = with_delta(point[i], j, h);
      minus[i] = with_delta(point[i], j, -h);
      Scalar fd = (evaluate(f, plus) - evaluate(f, minus)) / (2 * h);
      Scalar a = analytic[j];
      if (!std::isfinite(fd) || !std::isfinite(a))
        throw NumericError("gradient_check: non-finite derivative");
      Scalar err = std::abs(a - fd) / std::max(Scalar{1}, std::abs(a));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace tt2v::num
