#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "hstg/geo/geo.hpp"
#include "hstg/geo/trajectory_io.hpp"
#include "hstg/geo/zscore.hpp"
#include "hstg/numerics/ops.hpp"
#include "hstg/numerics/random.hpp"
#include "hstg/stmodel/road_vocab.hpp"

namespace hstg {

/// One trajectory in model-ready form.
struct SequenceExample {
  std::string id;
  std::vector<std::size_t> cells;  // flat cell id per point
  std::vector<double> coords;      // z-scored (lon, lat) per point, interleaved
  std::vector<double> distance;    // meters from the first point
  std::vector<double> time;        // seconds from the first point
  std::vector<int> road_class;     // vocabulary class per point, kIgnoreIndex if unknown

  std::size_t length() const { return cells.size(); }
};

inline SequenceExample make_example(const geo::LabeledTrajectory& lt, const geo::GridSpec& grid, const geo::ZScoreParams& z,
                                    const st::RoadVocab* vocab) {
  const geo::IntervalSeq iv = geo::intervals(lt.traj);
  SequenceExample ex;
  ex.id = lt.traj.id;
  ex.distance = iv.distance;
  ex.time = iv.time;
  for (std::size_t i = 0; i < lt.traj.points.size(); ++i) {
    const auto& p = lt.traj.points[i];
    ex.cells.push_back(geo::point_to_cell(grid, p).flat);
    ex.coords.push_back(z.apply(geo::kLon, p.lon));
    ex.coords.push_back(z.apply(geo::kLat, p.lat));
    int cls = num::kIgnoreIndex;
    if (vocab != nullptr && i < lt.true_roads.size() && lt.true_roads[i] != geo::kUnlabeled) cls = static_cast<int>(vocab->class_of(lt.true_roads[i]));
    ex.road_class.push_back(cls);
  }
  return ex;
}

/// Z-score statistics for (lon, lat, time interval, distance interval) over a
/// set of trajectories.
inline geo::ZScoreParams fit_trajectory_zscore(const std::vector<geo::LabeledTrajectory>& data) {
  std::vector<std::vector<double>> samples(geo::kNumZFeatures);
  for (const auto& lt : data) {
    const geo::IntervalSeq iv = geo::intervals(lt.traj);
    for (std::size_t i = 0; i < lt.traj.points.size(); ++i) {
      samples[geo::kLon].push_back(lt.traj.points[i].lon);
      samples[geo::kLat].push_back(lt.traj.points[i].lat);
      samples[geo::kTimeInterval].push_back(iv.time[i]);
      samples[geo::kDistanceInterval].push_back(iv.distance[i]);
    }
  }
  return geo::fit_zscore(samples);
}

/// Padded batch of examples; padded slots carry `pad_cell`, zero coordinates
/// and valid = 0.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t len = 0;
  std::vector<const SequenceExample*> examples;
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> cells;
  std::vector<double> coords;
  std::vector<std::uint8_t> valid;
};

inline TokenBatch make_batch(const std::vector<const SequenceExample*>& examples, std::size_t pad_cell) {
  if (examples.empty()) throw ValidationError("make_batch: no examples");
  TokenBatch b;
  b.batch = examples.size();
  b.examples = examples;
  for (const auto* ex : examples) b.len = std::max(b.len, ex->length());
  b.cells.assign(b.batch * b.len, pad_cell);
  b.coords.assign(b.batch * b.len * 2, 0.0);
  b.valid.assign(b.batch * b.len, 0);
  for (std::size_t i = 0; i < b.batch; ++i) {
    const auto* ex = examples[i];
    b.lengths.push_back(ex->length());
    for (std::size_t p = 0; p < ex->length(); ++p) {
      b.cells[i * b.len + p] = ex->cells[p];
      b.coords[(i * b.len + p) * 2] = ex->coords[p * 2];
      b.coords[(i * b.len + p) * 2 + 1] = ex->coords[p * 2 + 1];
      b.valid[i * b.len + p] = 1;
    }
  }
  return b;
}

/// Shuffled mini-batches of example indices. Indices are shuffled, cut into
/// pools of `pool` batches, sorted by length inside each pool so batches pad
/// little, and the resulting batch order is shuffled again.
inline std::vector<std::vector<std::size_t>> bucketed_batches(const std::vector<SequenceExample>& data, std::size_t batch_size, num::Rng& rng,
                                                              std::size_t pool = 8) {
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t span = batch_size * std::max<std::size_t>(1, pool);
  for (std::size_t start = 0; start < order.size(); start += span) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(start);
    auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + span));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) { return data[a].length() < data[b].length(); });
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch_size)));
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

}  // namespace hstg
