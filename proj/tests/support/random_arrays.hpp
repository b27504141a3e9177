#pragma once

#include "tt2v/numerics/ndarray.hpp"
#include "tt2v/numerics/rng.hpp"

namespace tt2v::testing {

inline num::NDArray rand_array(num::CounterRng& rng, num::Shape shape,
                               Scalar lo = -1.0, Scalar hi = 1.0) {
  num::NDArray a = num::NDArray::uninit(std::move(shape));
  for (num::Index i = 0; i < a.size(); ++i)
    a.mutable_data()[i] = rng.uniform(lo, hi);
  return a;
}

// Uniform magnitude in [lo_abs, hi_abs] with random sign; keeps samples away
// from non-smooth points (relu kink, division poles).
inline num::NDArray rand_signed_away_from_zero(num::CounterRng& rng, num::Shape shape,
                                               Scalar lo_abs, Scalar hi_abs) {
  num::NDArray a = num::NDArray::uninit(std::move(shape));
  for (num::Index i = 0; i < a.size(); ++i) {
    Scalar mag = rng.uniform(lo_abs, hi_abs);
    a.mutable_data()[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return a;
}

}  // namespace tt2v::testing
