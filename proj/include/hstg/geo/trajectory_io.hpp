#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "hstg/geo/geo.hpp"
#include "hstg/text.hpp"

namespace hstg::geo {

/// A trajectory with one (possibly unlabeled) road id per point.
struct LabeledTrajectory {
  Trajectory traj;
  std::vector<RoadId> true_roads;

  bool labeled() const {
    for (RoadId r : true_roads)
      if (r == kUnlabeled) return false;
    return !true_roads.empty();
  }
};

/// Writes `traj_id<TAB>lon<TAB>lat<TAB>t<TAB>true_road_id` lines.
inline void write_trajectories(const std::filesystem::path& path, const std::vector<LabeledTrajectory>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "# traj_id\tlon\tlat\tt_seconds\ttrue_road_id\n";
  for (const auto& lt : data) {
    for (std::size_t i = 0; i < lt.traj.points.size(); ++i) {
      const auto& p = lt.traj.points[i];
      const RoadId road = i < lt.true_roads.size() ? lt.true_roads[i] : kUnlabeled;
      out << lt.traj.id << '\t' << text::fmt(p.lon) << '\t' << text::fmt(p.lat) << '\t' << text::fmt(p.t) << '\t' << road << '\n';
    }
  }
}

/// Reads the trajectory file format; records must be grouped by id and
/// sorted by time within each trajectory. `#` lines are comments.
inline std::vector<LabeledTrajectory> read_trajectories(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("missing trajectory file: " + path.string());
  std::vector<LabeledTrajectory> out;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    auto cols = text::split(line, '\t');
    if (cols.size() != 4 && cols.size() != 5) throw ValidationError(where + ": expected 4 or 5 tab-separated columns");
    std::string id(cols[0]);
    TrajectoryPoint p{text::parse_double(cols[1], where), text::parse_double(cols[2], where), text::parse_double(cols[3], where)};
    validate_point(p);
    const RoadId road = cols.size() == 5 ? text::parse_int(cols[4], where) : kUnlabeled;
    if (out.empty() || out.back().traj.id != id) {
      if (seen.count(id) != 0) throw ValidationError(where + ": records of trajectory '" + id + "' are not contiguous");
      seen[id] = out.size();
      out.push_back({{id, {}}, {}});
    }
    auto& lt = out.back();
    if (!lt.traj.points.empty() && p.t < lt.traj.points.back().t) throw ValidationError(where + ": timestamps decrease within trajectory '" + id + "'");
    lt.traj.points.push_back(p);
    lt.true_roads.push_back(road);
  }
  for (const auto& lt : out) validate_trajectory(lt.traj);
  return out;
}

}  // namespace hstg::geo
