#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "hstg/numerics/tensor.hpp"

namespace hstg::num {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers for a fixed, ordered parameter list.
struct AdamState {
  explicit AdamState(AdamOptions options = {}) : opts(options) {}

  AdamOptions opts;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update on raw buffers. `step` is the 1-based
/// count after increment.
inline void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                        const AdamOptions& o, std::uint64_t step, double grad_scale = 1.0) {
  if (param.size() != m.size() || param.size() != v.size() || (!grad.empty() && grad.size() != param.size())) {
    throw DimensionError("adam_update: buffer sizes differ");
  }
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i] * grad_scale;
    m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
    v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
    param[i] -= o.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + o.eps);
  }
}

/// Applies one Adam step to every parameter from its accumulated gradient
/// (scaled by `grad_scale`). Parameters flagged in `frozen` keep their values
/// and moments. Gradients are left in place; callers zero them.
inline void adam_step(std::vector<Tensor>& params, AdamState& state, double grad_scale = 1.0,
                      const std::vector<bool>* frozen = nullptr) {
  if (state.first_moment.empty()) {
    for (const Tensor& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw DimensionError("adam_step: parameter list changed size");
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (frozen != nullptr && (*frozen)[i]) continue;
    Tensor& p = params[i];
    if (state.first_moment[i].size() != p.size()) throw DimensionError("adam_step: parameter shape changed");
    auto g = p.grad();
    for (double x : g) {
      if (!std::isfinite(x)) throw NumericError("adam_step: non-finite gradient");
    }
    adam_update(p.mutable_values(), g, state.first_moment[i], state.second_moment[i], state.opts, state.step, grad_scale);
  }
}

}  // namespace hstg::num
