#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "hstg/numerics/random.hpp"

namespace hstg::ssl {

struct Span {
  std::size_t start = 0;
  std::size_t length = 0;
};

/// Positions hidden behind the shared sentinel. Every masked position of
/// every trajectory uses the same sentinel cell row and the same coordinate
/// placeholder.
struct MaskingPlan {
  std::size_t length = 0;
  std::vector<Span> spans;  // disjoint, sorted by start
  std::vector<std::uint8_t> masked;
  std::size_t sentinel_cell_id = 0;
  std::array<double, 2> sentinel_tuple{0.0, 0.0};

  std::size_t masked_count() const {
    std::size_t n = 0;
    for (auto m : masked) n += m;
    return n;
  }
  bool is_masked(std::size_t pos) const { return pos < masked.size() && masked[pos] != 0; }
};

inline MaskingPlan empty_plan(std::size_t length, std::size_t sentinel_cell_id = 0) {
  MaskingPlan plan;
  plan.length = length;
  plan.masked.assign(length, 0);
  plan.sentinel_cell_id = sentinel_cell_id;
  return plan;
}

/// Samples spans with geometric lengths (mean `mean_span`) at uniformly
/// chosen unmasked starts until exactly ceil(rate * length) positions are
/// covered. Deterministic in `seed`.
inline MaskingPlan mask_spans(std::size_t length, double rate, double mean_span, std::uint64_t seed, std::size_t sentinel_cell_id = 0) {
  if (length == 0) throw ValidationError("mask_spans: empty sequence");
  if (!(rate >= 0.0 && rate <= 1.0)) throw ValidationError("mask_spans: rate must lie in [0, 1]");
  if (!(mean_span >= 1.0)) throw ValidationError("mask_spans: mean_span must be >= 1");
  MaskingPlan plan = empty_plan(length, sentinel_cell_id);
  const auto target = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(length) - 1e-9));
  num::Rng rng = num::make_rng(seed, 0x5a5a);
  std::geometric_distribution<std::size_t> extra(1.0 / mean_span);
  std::size_t covered = 0;
  std::vector<std::size_t> free_positions;
  while (covered < target) {
    free_positions.clear();
    for (std::size_t i = 0; i < length; ++i)
      if (!plan.masked[i]) free_positions.push_back(i);
    const std::size_t start = free_positions[num::uniform_index(rng, free_positions.size())];
    const std::size_t want = std::min(1 + extra(rng), target - covered);
    std::size_t len = 0;
    while (len < want && start + len < length && !plan.masked[start + len]) {
      plan.masked[start + len] = 1;
      ++len;
    }
    plan.spans.push_back({start, len});
    covered += len;
  }
  std::sort(plan.spans.begin(), plan.spans.end(), [](const Span& a, const Span& b) { return a.start < b.start; });
  return plan;
}

}  // namespace hstg::ssl
