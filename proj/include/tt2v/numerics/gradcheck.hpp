#pragma once

#include <functional>
#include <vector>

#include "tt2v/numerics/tape.hpp"

namespace tt2v::num {

// A differentiable map expressed against the tape: given leaf vars for each
// input array, build the graph and return the scalar output.
using TapedFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Max over all input coordinates of
//   |analytic - central difference| / max(1, |analytic|).
// Throws NumericError if any evaluation is non-finite.
Scalar gradient_check(const TapedFn& f, const std::vector<NDArray>& point, Scalar h);

// Copy of `a` with one flat coordinate shifted by delta.
NDArray with_delta(const NDArray& a, Index flat_index, Scalar delta);

}  // namespace tt2v::num
