#pragma once

#include <limits>
#include <string>
#include <vector>

#include "hstg/geo/road_network.hpp"
#include "hstg/stmodel/decode.hpp"

namespace hstg::eval {

/// Road whose segment lies closest to grid-local point (x, y); the scan runs
/// in id order and only a strictly smaller distance replaces the current
/// best, so ties go to the lowest id.
inline geo::RoadId nearest_road(const geo::RoadNetwork& net, double x, double y) {
  if (net.segments.empty()) throw ValidationError("nearest_road: empty network");
  geo::RoadId best = net.segments.front().id;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& s : net.segments) {
    const double d = geo::point_segment_distance(x, y, s);
    if (d < best_d) {
      best_d = d;
      best = s.id;
    }
  }
  return best;
}

/// Labels every point with its nearest road; `origin` is the lon/lat of the
/// grid-local (0, 0).
inline st::MatchResult nearest_road_baseline(const geo::Trajectory& traj, const geo::RoadNetwork& net, const geo::TrajectoryPoint& origin) {
  st::MatchResult r;
  r.id = traj.id;
  for (const auto& p : traj.points) {
    const geo::Offset o = geo::project_to_meters(origin, p);
    r.labels.push_back(nearest_road(net, o.dx, o.dy));
    r.probs.push_back(1.0);
  }
  r.route = geo::collapse_to_route(r.labels);
  return r;
}

}  // namespace hstg::eval
