#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "hstg/geo/road_network.hpp"
#include "hstg/geo/trajectory_io.hpp"
#include "hstg/numerics/random.hpp"

namespace hstg::datagen {

struct GenConfig {
  std::size_t rows = 10;  // M intersections north-south
  std::size_t cols = 10;  // N intersections east-west
  double spacing = 200.0;
  std::size_t n_trajectories = 5000;
  double speed_min = 6.0;  // m/s
  double speed_max = 14.0;
  double interval_min = 4.0;  // s
  double interval_max = 10.0;
  double noise_sigma = 15.0;  // m
  double detour_fraction = 0.1;
  std::uint64_t seed = 42;
  geo::TrajectoryPoint anchor{116.3, 39.9, 0.0};  // grid south-west corner

  /// Border between the outer intersections and the grid edge.
  double margin() const { return spacing / 2.0; }
  double width() const { return spacing * static_cast<double>(cols); }
  double height() const { return spacing * static_cast<double>(rows); }

  void validate() const {
    if (rows < 2 || cols < 2) throw ValidationError("lattice needs at least 2 x 2 intersections");
    if (!(spacing > 0.0)) throw ValidationError("spacing must be positive");
    if (!(speed_min > 0.0) || speed_max < speed_min) throw ValidationError("speed range must be positive and ordered");
    if (interval_min < 1.0 || interval_max < interval_min) throw ValidationError("sampling interval range must start at >= 1 s and be ordered");
    if (!(noise_sigma >= 0.0)) throw ValidationError("gps noise sigma must be >= 0");
    if (!(detour_fraction >= 0.0 && detour_fraction <= 1.0)) throw ValidationError("detour fraction must lie in [0, 1]");
    geo::validate_point(anchor);
  }
};

/// Manhattan lattice. Node (r, c) has id r * cols + c and sits at
/// (margin + c * spacing, margin + r * spacing). Horizontal roads come first,
/// id r * (cols - 1) + c joining (r, c)-(r, c + 1); vertical roads follow,
/// id rows * (cols - 1) + r * cols + c joining (r, c)-(r + 1, c).
struct SyntheticNetwork {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double spacing = 0.0;
  std::vector<geo::Offset> nodes;
  geo::RoadNetwork roads;
  struct Link {
    std::size_t to;
    geo::RoadId road;
  };
  std::vector<std::vector<Link>> adjacency;
  std::vector<std::pair<std::size_t, std::size_t>> road_nodes;  // endpoints per road id
};

inline SyntheticNetwork gen_network(const GenConfig& cfg) {
  cfg.validate();
  SyntheticNetwork net;
  net.rows = cfg.rows;
  net.cols = cfg.cols;
  net.spacing = cfg.spacing;
  for (std::size_t r = 0; r < cfg.rows; ++r)
    for (std::size_t c = 0; c < cfg.cols; ++c)
      net.nodes.push_back({cfg.margin() + static_cast<double>(c) * cfg.spacing, cfg.margin() + static_cast<double>(r) * cfg.spacing});
  net.adjacency.resize(net.nodes.size());
  auto link = [&](std::size_t a, std::size_t b) {
    const auto id = static_cast<geo::RoadId>(net.road_nodes.size());
    net.roads.segments.push_back({id, net.nodes[a].dx, net.nodes[a].dy, net.nodes[b].dx, net.nodes[b].dy, cfg.spacing});
    net.road_nodes.emplace_back(a, b);
    net.adjacency[a].push_back({b, id});
    net.adjacency[b].push_back({a, id});
  };
  for (std::size_t r = 0; r < cfg.rows; ++r)
    for (std::size_t c = 0; c + 1 < cfg.cols; ++c) link(r * cfg.cols + c, r * cfg.cols + c + 1);
  for (std::size_t r = 0; r + 1 < cfg.rows; ++r)
    for (std::size_t c = 0; c < cfg.cols; ++c) link(r * cfg.cols + c, (r + 1) * cfg.cols + c);
  return net;
}

/// Node sequence plus the road used between consecutive nodes.
struct Path {
  std::vector<std::size_t> nodes;
  std::vector<geo::RoadId> roads;
};

/// Dijkstra on road length scaled by (1 + jitter_e); small random jitter
/// picks among equally short lattice paths. Empty when unreachable.
inline Path shortest_path(const SyntheticNetwork& net, std::size_t from, std::size_t to, const std::vector<double>& jitter) {
  const std::size_t n = net.nodes.size();
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> prev(n, n);
  std::vector<geo::RoadId> via(n, -1);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[from] = 0.0;
  pq.push({0.0, from});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    if (u == to) break;
    for (const auto& l : net.adjacency[u]) {
      const double w = net.roads.segments[static_cast<std::size_t>(l.road)].length * (1.0 + jitter[static_cast<std::size_t>(l.road)]);
      if (d + w < dist[l.to]) {
        dist[l.to] = d + w;
        prev[l.to] = u;
        via[l.to] = l.road;
        pq.push({dist[l.to], l.to});
      }
    }
  }
  Path p;
  if (!std::isfinite(dist[to])) return p;
  for (std::size_t v = to; v != from; v = prev[v]) {
    p.nodes.push_back(v);
    p.roads.push_back(via[v]);
  }
  p.nodes.push_back(from);
  std::reverse(p.nodes.begin(), p.nodes.end());
  std::reverse(p.roads.begin(), p.roads.end());
  return p;
}

/// Road under arc-length position `s` along a path with cumulative road ends
/// `ends`: a point on a shared endpoint belongs to the next road, and the
/// path end belongs to the last road.
inline std::size_t road_index_at(const std::vector<double>& ends, double s) {
  const auto it = std::upper_bound(ends.begin(), ends.end(), s);
  return std::min(static_cast<std::size_t>(it - ends.begin()), ends.size() - 1);
}

struct GeneratedTrajectory {
  geo::LabeledTrajectory data;
  geo::SegmentRoute route;
  std::vector<geo::Offset> clean;  // noise-free positions, grid-local meters
  bool detour = false;
};

/// One trajectory from its own RNG stream (seed, index).
inline GeneratedTrajectory gen_trajectory(const SyntheticNetwork& net, const GenConfig& cfg, std::size_t index) {
  num::Rng rng = num::make_rng(cfg.seed, 0x7000000 + index);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n_nodes = net.nodes.size();
  const std::size_t n_roads = net.road_nodes.size();
  char id_buf[32];
  std::snprintf(id_buf, sizeof id_buf, "traj_%05zu", index);
  for (;;) {
    const std::size_t from = num::uniform_index(rng, n_nodes);
    const std::size_t to = num::uniform_index(rng, n_nodes);
    if (from == to) continue;
    std::vector<double> jitter(n_roads);
    for (double& j : jitter) j = num::uniform(rng, 0.0, 1e-3);
    Path path = shortest_path(net, from, to, jitter);
    if (path.roads.empty()) continue;
    bool detour = false;
    if (num::uniform(rng, 0.0, 1.0) < cfg.detour_fraction) {
      const std::size_t via = num::uniform_index(rng, n_nodes);
      if (via != from && via != to) {
        Path a = shortest_path(net, from, via, jitter);
        Path b = shortest_path(net, via, to, jitter);
        std::set<geo::RoadId> used(a.roads.begin(), a.roads.end());
        bool repeats = a.roads.empty() || b.roads.empty();
        for (auto r : b.roads) repeats = repeats || !used.insert(r).second;
        if (!repeats) {
          a.nodes.insert(a.nodes.end(), b.nodes.begin() + 1, b.nodes.end());
          a.roads.insert(a.roads.end(), b.roads.begin(), b.roads.end());
          path = std::move(a);
          detour = true;
        }
      }
    }
    std::vector<double> ends;
    double total = 0.0;
    for (auto r : path.roads) ends.push_back(total += net.roads.segments[static_cast<std::size_t>(r)].length);
    const double speed = num::uniform(rng, cfg.speed_min, cfg.speed_max);
    GeneratedTrajectory g;
    g.detour = detour;
    g.data.traj.id = id_buf;
    for (double t = 0.0; speed * t <= total; t += num::uniform(rng, cfg.interval_min, cfg.interval_max)) {
      const double s = speed * t;
      const std::size_t k = road_index_at(ends, s);
      const double start = k == 0 ? 0.0 : ends[k - 1];
      const geo::Offset a = net.nodes[path.nodes[k]];
      const geo::Offset b = net.nodes[path.nodes[k + 1]];
      const double f = std::clamp((s - start) / (ends[k] - start), 0.0, 1.0);
      const geo::Offset pos{a.dx + f * (b.dx - a.dx), a.dy + f * (b.dy - a.dy)};
      const geo::Offset noisy{pos.dx + cfg.noise_sigma * noise(rng), pos.dy + cfg.noise_sigma * noise(rng)};
      g.clean.push_back(pos);
      g.data.traj.points.push_back(geo::unproject(cfg.anchor, noisy, t));
      g.data.true_roads.push_back(path.roads[k]);
    }
    if (g.data.traj.points.size() < 2) continue;
    g.route = geo::collapse_to_route(g.data.true_roads);
    return g;
  }
}

inline std::vector<GeneratedTrajectory> gen_trajectories(const SyntheticNetwork& net, const GenConfig& cfg) {
  cfg.validate();
  std::vector<GeneratedTrajectory> out;
  out.reserve(cfg.n_trajectories);
  for (std::size_t i = 0; i < cfg.n_trajectories; ++i) out.push_back(gen_trajectory(net, cfg, i));
  return out;
}

/// Grid covering the lattice and its margin.
inline geo::GridSpec grid_for(const GenConfig& cfg, double cell_size) {
  return geo::GridSpec::from_meters(cfg.anchor, cfg.width(), cfg.height(), cell_size);
}

/// First floor(0.8 n) items train, the rest test; order is preserved.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_dataset(const std::vector<T>& items) {
  if (items.size() < 5) throw ValidationError("split_dataset: need at least 5 trajectories, got " + std::to_string(items.size()));
  const std::size_t n_train = items.size() * 4 / 5;
  return {std::vector<T>(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_train)),
          std::vector<T>(items.begin() + static_cast<std::ptrdiff_t>(n_train), items.end())};
}

}  // namespace hstg::datagen
