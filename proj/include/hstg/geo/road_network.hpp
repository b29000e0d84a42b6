#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "hstg/geo/geo.hpp"
#include "hstg/text.hpp"

namespace hstg::geo {

/// Straight road segment in grid-local meters.
struct RoadSegment {
  RoadId id = 0;
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
  double length = 0.0;
};

struct RoadNetwork {
  std::vector<RoadSegment> segments;  // sorted by id

  const RoadSegment& at(RoadId id) const {
    auto it = std::lower_bound(segments.begin(), segments.end(), id, [](const RoadSegment& s, RoadId v) { return s.id < v; });
    if (it == segments.end() || it->id != id) throw ValidationError("road id " + std::to_string(id) + " not in network");
    return *it;
  }

  std::vector<RoadId> ids() const {
    std::vector<RoadId> out;
    for (const auto& s : segments) out.push_back(s.id);
    return out;
  }
};

/// Euclidean distance from (x, y) to the closed segment.
inline double point_segment_distance(double x, double y, const RoadSegment& s) {
  const double dx = s.x2 - s.x1;
  const double dy = s.y2 - s.y1;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((x - s.x1) * dx + (y - s.y1) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(x - (s.x1 + t * dx), y - (s.y1 + t * dy));
}

inline void write_network(const std::filesystem::path& path, const RoadNetwork& net) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "# road_id\tx1\ty1\tx2\ty2\tlength_m\n";
  for (const auto& s : net.segments)
    out << s.id << '\t' << text::fmt(s.x1) << '\t' << text::fmt(s.y1) << '\t' << text::fmt(s.x2) << '\t' << text::fmt(s.y2) << '\t' << text::fmt(s.length) << '\n';
}

inline RoadNetwork read_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("missing network file: " + path.string());
  RoadNetwork net;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    auto cols = text::split(line, '\t');
    if (cols.size() != 6) throw ValidationError(where + ": expected road_id, x1, y1, x2, y2, length_m");
    RoadSegment s{text::parse_int(cols[0], where), text::parse_double(cols[1], where), text::parse_double(cols[2], where),
                  text::parse_double(cols[3], where), text::parse_double(cols[4], where), text::parse_double(cols[5], where)};
    if (!(s.length > 0.0)) throw ValidationError(where + ": road length must be positive");
    net.segments.push_back(s);
  }
  std::sort(net.segments.begin(), net.segments.end(), [](const RoadSegment& a, const RoadSegment& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < net.segments.size(); ++i)
    if (net.segments[i].id == net.segments[i - 1].id) throw ValidationError(path.filename().string() + ": duplicate road id " + std::to_string(net.segments[i].id));
  if (net.segments.empty()) throw ValidationError(path.filename().string() + ": no roads");
  return net;
}

/// `traj_id<TAB>comma-joined route` lines.
inline void write_routes(const std::filesystem::path& path, const std::vector<std::pair<std::string, SegmentRoute>>& routes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (const auto& [id, route] : routes) out << id << '\t' << text::join_ints(route.roads) << '\n';
}

inline std::map<std::string, SegmentRoute> read_routes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("missing routes file: " + path.string());
  std::map<std::string, SegmentRoute> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    auto cols = text::split(line, '\t');
    if (cols.size() != 2) throw ValidationError(where + ": expected traj_id and route");
    SegmentRoute r;
    for (auto tok : text::split(cols[1], ',')) r.roads.push_back(text::parse_int(tok, where));
    out[std::string(cols[0])] = std::move(r);
  }
  return out;
}

}  // namespace hstg::geo
