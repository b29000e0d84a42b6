#pragma once

#include <random>
#include <vector>

#include "hstg/numerics/ops.hpp"
#include "hstg/numerics/random.hpp"

namespace hstg::testing {

inline num::Tensor random_tensor(num::Rng& rng, num::Shape shape, double lo = -1.0, double hi = 1.0, bool grad = false) {
  std::vector<double> v(num::shape_size(shape));
  for (double& x : v) x = num::uniform(rng, lo, hi);
  return num::Tensor(std::move(shape), std::move(v), grad);
}

/// sum(x * w) for a fixed random w, so every output coordinate gets a
/// distinct upstream gradient.
inline num::Tensor weighted_sum(const num::Tensor& x, const num::Tensor& w) { return num::sum(num::mul(x, w)); }

}  // namespace hstg::testing
