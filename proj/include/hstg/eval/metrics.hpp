#pragma once

#include <map>
#include <vector>

#include "hstg/geo/road_network.hpp"

namespace hstg::eval {

/// Road id -> length in meters.
class RoadLengthTable {
 public:
  RoadLengthTable() = default;
  explicit RoadLengthTable(std::map<geo::RoadId, double> lengths) : lengths_(std::move(lengths)) {
    for (const auto& [id, len] : lengths_)
      if (!(len > 0.0)) throw ValidationError("road " + std::to_string(id) + " has non-positive length");
  }
  explicit RoadLengthTable(const geo::RoadNetwork& net) {
    std::map<geo::RoadId, double> m;
    for (const auto& s : net.segments) m[s.id] = s.length;
    *this = RoadLengthTable(std::move(m));
  }

  double length(geo::RoadId id) const {
    auto it = lengths_.find(id);
    if (it == lengths_.end()) throw ValidationError("road " + std::to_string(id) + " missing from length table");
    return it->second;
  }

 private:
  std::map<geo::RoadId, double> lengths_;
};

struct RouteScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double len_matched = 0.0;
  double len_truth = 0.0;
  double len_intersection = 0.0;
};

/// Length-weighted overlap between matched and true routes. By default each
/// road counts once (set semantics); with `multiset` a road counts as many
/// times as it occurs, and the intersection takes the smaller multiplicity.
inline RouteScore route_metrics(const geo::SegmentRoute& matched, const geo::SegmentRoute& truth, const RoadLengthTable& lengths, bool multiset = false) {
  if (matched.roads.empty() || truth.roads.empty()) throw ValidationError("route_metrics: routes must be non-empty");
  std::map<geo::RoadId, std::size_t> m;
  std::map<geo::RoadId, std::size_t> g;
  for (auto id : matched.roads) m[id] = multiset ? m[id] + 1 : 1;
  for (auto id : truth.roads) g[id] = multiset ? g[id] + 1 : 1;
  RouteScore s;
  for (const auto& [id, n] : m) s.len_matched += static_cast<double>(n) * lengths.length(id);
  for (const auto& [id, n] : g) {
    s.len_truth += static_cast<double>(n) * lengths.length(id);
    auto it = m.find(id);
    if (it != m.end()) s.len_intersection += static_cast<double>(std::min(n, it->second)) * lengths.length(id);
  }
  if (s.len_intersection == 0.0) return s;
  s.precision = s.len_intersection / s.len_matched;
  s.recall = s.len_intersection / s.len_truth;
  s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

}  // namespace hstg::eval
