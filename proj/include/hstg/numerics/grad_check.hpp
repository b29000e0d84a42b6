#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hstg/numerics/tensor.hpp"

namespace hstg::num {

/// Compares reverse-mode gradients of the scalar `f` with central differences
/// of step `h` over every coordinate of `params`. Returns
/// max |autodiff - fd| / max(1, |fd|).
inline double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params, double h = 1e-5) {
  if (!(h > 0.0)) throw ValidationError("grad_check: step must be positive");
  for (Tensor& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor loss = f();
  if (!std::isfinite(loss.item())) throw NumericError("grad_check: non-finite objective");
  loss.backward();
  double worst = 0.0;
  for (Tensor& p : params) {
    std::vector<double> analytic(p.size(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    auto values = p.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      double up = 0.0;
      double down = 0.0;
      {
        NoGradGuard guard;
        values[i] = saved + h;
        up = f().item();
        values[i] = saved - h;
        down = f().item();
      }
      values[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("grad_check: non-finite objective");
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
    }
    p.zero_grad();
  }
  return worst;
}

}  // namespace hstg::num
