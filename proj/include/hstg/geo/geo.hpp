#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "hstg/error.hpp"

namespace hstg::geo {

inline constexpr double kEarthRadiusM = 6'371'000.0;

using RoadId = std::int64_t;
inline constexpr RoadId kUnlabeled = -1;

struct TrajectoryPoint {
  double lon = 0.0;  // degrees
  double lat = 0.0;  // degrees
  double t = 0.0;    // seconds
};

struct Trajectory {
  std::string id;
  std::vector<TrajectoryPoint> points;
};

/// Local planar offset in meters (x east, y north).
struct Offset {
  double dx = 0.0;
  double dy = 0.0;
};

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Equirectangular offset of `p` from `origin`, scaled at the origin latitude.
inline Offset project_to_meters(const TrajectoryPoint& origin, const TrajectoryPoint& p) {
  return {kEarthRadiusM * std::cos(deg2rad(origin.lat)) * deg2rad(p.lon - origin.lon), kEarthRadiusM * deg2rad(p.lat - origin.lat)};
}

/// Inverse of project_to_meters for the same origin.
inline TrajectoryPoint unproject(const TrajectoryPoint& origin, Offset o, double t = 0.0) {
  return {origin.lon + rad2deg(o.dx / (kEarthRadiusM * std::cos(deg2rad(origin.lat)))), origin.lat + rad2deg(o.dy / kEarthRadiusM), t};
}

inline void validate_point(const TrajectoryPoint& p) {
  if (!(p.lon >= -180.0 && p.lon <= 180.0) || !(p.lat >= -90.0 && p.lat <= 90.0)) {
    throw ValidationError("point outside lon/lat range: (" + std::to_string(p.lon) + ", " + std::to_string(p.lat) + ")");
  }
  if (!std::isfinite(p.t)) throw ValidationError("non-finite timestamp");
}

/// Length >= 2, valid coordinates, non-decreasing timestamps.
inline void validate_trajectory(const Trajectory& traj) {
  if (traj.points.size() < 2) throw ValidationError("trajectory '" + traj.id + "' has fewer than 2 points");
  for (std::size_t i = 0; i < traj.points.size(); ++i) {
    validate_point(traj.points[i]);
    if (i > 0 && traj.points[i].t < traj.points[i - 1].t) {
      throw ValidationError("trajectory '" + traj.id + "' has decreasing timestamps at index " + std::to_string(i));
    }
  }
}

struct CellId {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t flat = 0;

  friend bool operator==(const CellId&, const CellId&) = default;
};

/// Equal-size square cells over a lon/lat box, laid out in meters from the
/// south-west corner. Row grows northward, column eastward.
struct GridSpec {
  double min_lon = 0.0;
  double min_lat = 0.0;
  double max_lon = 0.0;
  double max_lat = 0.0;
  double cell_size = 100.0;
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;

  TrajectoryPoint origin() const { return {min_lon, min_lat, 0.0}; }
  std::size_t n_cells() const { return n_rows * n_cols; }

  Offset extent_m() const { return project_to_meters(origin(), {max_lon, max_lat, 0.0}); }

  void validate() const {
    if (!(max_lon > min_lon) || !(max_lat > min_lat)) throw ValidationError("grid extent must have max > min on both axes");
    if (!(cell_size > 0.0)) throw ValidationError("grid cell_size must be positive");
    if (n_rows * n_cols < 1) throw ValidationError("grid has no cells");
  }

  static GridSpec from_extent(double min_lon, double min_lat, double max_lon, double max_lat, double cell_size) {
    GridSpec g{min_lon, min_lat, max_lon, max_lat, cell_size, 0, 0};
    if (!(max_lon > min_lon) || !(max_lat > min_lat)) throw ValidationError("grid extent must have max > min on both axes");
    if (!(cell_size > 0.0)) throw ValidationError("grid cell_size must be positive");
    const Offset e = g.extent_m();
    // Tolerance absorbs degree/meter round-off so an exact multiple of the
    // cell size does not spawn an extra sliver column.
    g.n_cols = static_cast<std::size_t>(std::max(1.0, std::ceil(e.dx / cell_size - 1e-9)));
    g.n_rows = static_cast<std::size_t>(std::max(1.0, std::ceil(e.dy / cell_size - 1e-9)));
    return g;
  }

  static GridSpec from_meters(const TrajectoryPoint& south_west, double width_m, double height_m, double cell_size) {
    const TrajectoryPoint ne = unproject(south_west, {width_m, height_m});
    return from_extent(south_west.lon, south_west.lat, ne.lon, ne.lat, cell_size);
  }
};

namespace detail {

inline std::size_t bin(double v, double cell, std::size_t n) {
  double q = v / cell;
  const double r = std::round(q);
  if (std::abs(q - r) < 1e-9) q = r;
  const double f = std::floor(q);
  if (f < 0.0) return 0;
  return std::min(static_cast<std::size_t>(f), n - 1);
}

}  // namespace detail

inline CellId make_cell(const GridSpec& spec, std::size_t row, std::size_t col) {
  if (row >= spec.n_rows || col >= spec.n_cols) throw IndexError("cell (" + std::to_string(row) + ", " + std::to_string(col) + ") outside grid");
  return {row, col, row * spec.n_cols + col};
}

inline CellId cell_from_flat(const GridSpec& spec, std::size_t flat) {
  if (flat >= spec.n_cells()) throw IndexError("cell id " + std::to_string(flat) + " outside grid of " + std::to_string(spec.n_cells()));
  return {flat / spec.n_cols, flat % spec.n_cols, flat};
}

/// Half-open binning [edge, edge + cell) in projected meters; points outside
/// the extent clamp to the border cell, which also puts the max edge in the
/// last cell.
inline CellId point_to_cell(const GridSpec& spec, const TrajectoryPoint& p) {
  const Offset o = project_to_meters(spec.origin(), p);
  return make_cell(spec, detail::bin(o.dy, spec.cell_size, spec.n_rows), detail::bin(o.dx, spec.cell_size, spec.n_cols));
}

/// Cell centre in grid-local meters.
inline Offset cell_centroid_m(const GridSpec& spec, const CellId& c) {
  return {(static_cast<double>(c.col) + 0.5) * spec.cell_size, (static_cast<double>(c.row) + 0.5) * spec.cell_size};
}

inline TrajectoryPoint cell_centroid(const GridSpec& spec, const CellId& c) { return unproject(spec.origin(), cell_centroid_m(spec, c)); }

/// Distance and elapsed time of every point relative to the first one.
struct IntervalSeq {
  std::vector<double> distance;  // meters
  std::vector<double> time;      // seconds
};

inline IntervalSeq intervals(const Trajectory& traj) {
  validate_trajectory(traj);
  IntervalSeq out;
  const TrajectoryPoint& first = traj.points.front();
  for (const TrajectoryPoint& p : traj.points) {
    const Offset o = project_to_meters(first, p);
    out.distance.push_back(std::hypot(o.dx, o.dy));
    out.time.push_back(p.t - first.t);
  }
  out.distance[0] = 0.0;
  out.time[0] = 0.0;
  return out;
}

/// Road-ID route without consecutive repeats.
struct SegmentRoute {
  std::vector<RoadId> roads;

  friend bool operator==(const SegmentRoute&, const SegmentRoute&) = default;
};

inline SegmentRoute collapse_to_route(const std::vector<RoadId>& point_labels) {
  if (point_labels.empty()) throw ValidationError("collapse_to_route: empty label sequence");
  SegmentRoute route;
  for (RoadId r : point_labels)
    if (route.roads.empty() || route.roads.back() != r) route.roads.push_back(r);
  return route;
}

}  // namespace hstg::geo
