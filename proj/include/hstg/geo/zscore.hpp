#pragma once

#include <cmath>
#include <vector>

#include "hstg/error.hpp"

namespace hstg::geo {

/// Per-feature standardization statistics. Features whose spread is zero
/// keep std = 1 so they normalize to all-zero instead of dividing by zero.
struct ZScoreParams {
  std::vector<double> mean;
  std::vector<double> std;

  double apply(std::size_t feature, double x) const { return (x - mean.at(feature)) / std.at(feature); }
};

/// Feature order used by the pipeline.
enum ZFeature : std::size_t { kLon = 0, kLat = 1, kTimeInterval = 2, kDistanceInterval = 3, kNumZFeatures = 4 };

/// `samples[f]` holds every observed value of feature f (population std).
inline ZScoreParams fit_zscore(const std::vector<std::vector<double>>& samples) {
  ZScoreParams p;
  for (const auto& values : samples) {
    if (values.empty()) throw ValidationError("fit_zscore: feature without samples");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) sd = 1.0;
    p.mean.push_back(mean);
    p.std.push_back(sd);
  }
  return p;
}

inline std::vector<std::vector<double>> apply_zscore(const ZScoreParams& params, const std::vector<std::vector<double>>& samples) {
  if (samples.size() != params.mean.size()) throw ValidationError("apply_zscore: feature count differs from fitted params");
  std::vector<std::vector<double>> out(samples.size());
  for (std::size_t f = 0; f < samples.size(); ++f)
    for (double v : samples[f]) out[f].push_back(params.apply(f, v));
  return out;
}

}  // namespace hstg::geo
