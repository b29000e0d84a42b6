#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hstg/numerics/ops.hpp"
#include "hstg/numerics/param_store.hpp"

namespace hstg::st {

using num::Tensor;

/// Log-spaced slot boundaries over [0, max_value]: n_slots + 1 ascending
/// values with boundaries[0] = 0 and boundaries[n_slots] = max_value.
inline std::vector<double> log_slot_boundaries(std::size_t n_slots, double max_value) {
  if (n_slots == 0) throw ValidationError("log_slot_boundaries: need at least one slot");
  if (!(max_value > 0.0) || !std::isfinite(max_value)) throw ValidationError("log_slot_boundaries: max value must be positive and finite");
  std::vector<double> b(n_slots + 1);
  const double top = std::log1p(max_value);
  for (std::size_t i = 0; i <= n_slots; ++i) b[i] = std::expm1(top * static_cast<double>(i) / static_cast<double>(n_slots));
  b[0] = 0.0;
  b[n_slots] = max_value;
  return b;
}

/// Learned interval embedding: one row per slot boundary plus the decay
/// transform applied to the interpolated row.
struct StFactorTable {
  std::vector<double> boundaries;  // n_slots + 1, strictly increasing, starts at 0
  Tensor rows;                     // [n_slots + 1, D]
  Tensor decay;                    // W_i: [D, D]

  StFactorTable() = default;
  StFactorTable(num::ParamStore& store, const std::string& name, std::vector<double> bounds, std::size_t d) : boundaries(std::move(bounds)) {
    validate_boundaries(boundaries);
    rows = store.create(name + ".rows", {boundaries.size(), d}, num::Init::kNormal, 1.0 / std::sqrt(static_cast<double>(d)));
    decay = store.create(name + ".decay", {d, d}, num::Init::kXavier);
  }

  std::size_t n_slots() const { return boundaries.size() - 1; }
  std::size_t width() const { return rows.dim(1); }

  static void validate_boundaries(const std::vector<double>& b) {
    if (b.size() < 2) throw ValidationError("slot boundaries: need at least two values");
    if (b.front() != 0.0) throw ValidationError("slot boundaries: first value must be 0");
    for (std::size_t i = 1; i < b.size(); ++i)
      if (!(b[i] > b[i - 1])) throw ValidationError("slot boundaries must be strictly increasing");
  }
};

/// Slot lookup for one value: lower/upper boundary indices and the weights
/// placed on the upper-bound and lower-bound rows.
struct SlotBlend {
  std::size_t lower = 0;
  std::size_t upper = 1;
  double w_upper_row = 0.0;  // (u - v) / (u - l)
  double w_lower_row = 0.0;  // (v - l) / (u - l)
};

/// Slot j holds l = b_j <= v < b_{j+1} = u; values at or past the last
/// boundary clamp to it inside the final slot.
inline SlotBlend locate_slot(const std::vector<double>& b, double v) {
  if (!(v >= 0.0)) throw ValidationError("interval value must be non-negative, got " + std::to_string(v));
  const std::size_t last = b.size() - 1;
  v = std::min(v, b[last]);
  auto it = std::upper_bound(b.begin(), b.end(), v);
  std::size_t j = static_cast<std::size_t>(it - b.begin());
  j = std::min(j == 0 ? 0 : j - 1, last - 1);
  SlotBlend s;
  s.lower = j;
  s.upper = j + 1;
  const double span = b[j + 1] - b[j];
  s.w_upper_row = (b[j + 1] - v) / span;
  s.w_lower_row = (v - b[j]) / span;
  return s;
}

/// r = (W_u (u - v) + W_l (v - l)) / (u - l) for every value: [n, D].
inline Tensor interval_embed(const StFactorTable& table, const std::vector<double>& values) {
  std::vector<std::size_t> up;
  std::vector<std::size_t> lo;
  std::vector<double> wu;
  std::vector<double> wl;
  for (double v : values) {
    const SlotBlend s = locate_slot(table.boundaries, v);
    up.push_back(s.upper);
    lo.push_back(s.lower);
    wu.push_back(s.w_upper_row);
    wl.push_back(s.w_lower_row);
  }
  return num::blend_rows(table.rows, up, wu, lo, wl);
}

/// r'' = r ⊕ (ln(1 + v) / s) r W_i for rows r [n, D]; positions are 1-based.
inline Tensor decay_concat(const Tensor& r, const std::vector<double>& values, const std::vector<std::size_t>& positions, const Tensor& decay) {
  if (r.rank() != 2 || r.dim(0) != values.size() || values.size() != positions.size()) throw DimensionError("decay_concat: one value and position per row");
  std::vector<double> coef(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (positions[i] == 0) throw ValidationError("decay_concat: positions are 1-based");
    if (!(values[i] >= 0.0)) throw ValidationError("decay_concat: interval value must be non-negative");
    coef[i] = std::log1p(values[i]) / static_cast<double>(positions[i]);
  }
  Tensor decayed = num::row_scale(num::matmul(r, decay), std::move(coef));
  return num::concat_last({r, decayed});
}

/// Full factor for a batch of interval values: [n, 2D].
inline Tensor st_factor(const StFactorTable& table, const std::vector<double>& values, const std::vector<std::size_t>& positions) {
  return decay_concat(interval_embed(table, values), values, positions, table.decay);
}

}  // namespace hstg::st
