#include <cmath>
#include <filesystem>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "hstg/datagen/synthetic.hpp"

namespace {

using namespace hstg;
using namespace hstg::datagen;

GenConfig small_config(std::size_t n) {
  GenConfig cfg;
  cfg.rows = 5;
  cfg.cols = 6;
  cfg.n_trajectories = n;
  return cfg;
}

TEST(Network, LatticeHasExpectedRoads) {
  const GenConfig cfg = small_config(1);
  const SyntheticNetwork net = gen_network(cfg);
  EXPECT_EQ(net.nodes.size(), 30u);
  EXPECT_EQ(net.roads.segments.size(), 5u * 5u + 4u * 6u);
  for (std::size_t i = 0; i < net.roads.segments.size(); ++i) {
    const auto& s = net.roads.segments[i];
    EXPECT_EQ(s.id, static_cast<geo::RoadId>(i));
    EXPECT_NEAR(std::hypot(s.x2 - s.x1, s.y2 - s.y1), s.length, 1e-9);
    EXPECT_EQ(s.length, cfg.spacing);
  }
  EXPECT_EQ(net.nodes.front().dx, cfg.margin());
  EXPECT_EQ(net.nodes.back().dy, cfg.margin() + 4 * cfg.spacing);
}

TEST(Network, EveryNodeIsReachable) {
  const SyntheticNetwork net = gen_network(small_config(1));
  std::vector<bool> seen(net.nodes.size(), false);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = true;
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    for (const auto& l : net.adjacency[u])
      if (!seen[l.to]) {
        seen[l.to] = true;
        q.push(l.to);
      }
  }
  for (bool s : seen) EXPECT_TRUE(s);
}

TEST(Network, ShortestPathHasManhattanLength) {
  const SyntheticNetwork net = gen_network(small_config(1));
  const std::vector<double> no_jitter(net.road_nodes.size(), 0.0);
  num::Rng rng = num::make_rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t a = num::uniform_index(rng, net.nodes.size());
    const std::size_t b = num::uniform_index(rng, net.nodes.size());
    if (a == b) continue;
    const Path p = shortest_path(net, a, b, no_jitter);
    const std::size_t hops = static_cast<std::size_t>(std::abs(static_cast<long>(a / 6) - static_cast<long>(b / 6)) +
                                                      std::abs(static_cast<long>(a % 6) - static_cast<long>(b % 6)));
    EXPECT_EQ(p.roads.size(), hops);
    ASSERT_EQ(p.nodes.size(), p.roads.size() + 1);
    EXPECT_EQ(p.nodes.front(), a);
    EXPECT_EQ(p.nodes.back(), b);
    for (std::size_t k = 0; k < p.roads.size(); ++k) {
      const auto [u, v] = net.road_nodes[static_cast<std::size_t>(p.roads[k])];
      EXPECT_TRUE((u == p.nodes[k] && v == p.nodes[k + 1]) || (v == p.nodes[k] && u == p.nodes[k + 1]));
    }
  }
}

TEST(Trajectories, NoiseFreePointsLieOnTheirLabeledRoad) {
  GenConfig cfg = small_config(60);
  cfg.noise_sigma = 0.0;
  const SyntheticNetwork net = gen_network(cfg);
  for (const auto& g : gen_trajectories(net, cfg)) {
    ASSERT_EQ(g.data.true_roads.size(), g.data.traj.points.size());
    std::set<geo::RoadId> on_route(g.route.roads.begin(), g.route.roads.end());
    for (std::size_t i = 0; i < g.clean.size(); ++i) {
      const auto& seg = net.roads.segments[static_cast<std::size_t>(g.data.true_roads[i])];
      EXPECT_LT(geo::point_segment_distance(g.clean[i].dx, g.clean[i].dy, seg), 1e-9);
      const geo::Offset o = geo::project_to_meters(cfg.anchor, g.data.traj.points[i]);
      EXPECT_NEAR(o.dx, g.clean[i].dx, 1e-6);
      EXPECT_NEAR(o.dy, g.clean[i].dy, 1e-6);
      EXPECT_TRUE(on_route.count(g.data.true_roads[i]));
    }
    EXPECT_EQ(g.route, geo::collapse_to_route(g.data.true_roads));
  }
}

TEST(Trajectories, RouteIsAConnectedWalk) {
  const GenConfig cfg = small_config(100);
  const SyntheticNetwork net = gen_network(cfg);
  for (const auto& g : gen_trajectories(net, cfg)) {
    for (std::size_t k = 0; k + 1 < g.route.roads.size(); ++k) {
      const auto [a, b] = net.road_nodes[static_cast<std::size_t>(g.route.roads[k])];
      const auto [c, d] = net.road_nodes[static_cast<std::size_t>(g.route.roads[k + 1])];
      EXPECT_TRUE(a == c || a == d || b == c || b == d) << g.data.traj.id;
    }
  }
}

TEST(Trajectories, NoiseHasTheConfiguredScale) {
  const GenConfig cfg = small_config(200);
  const SyntheticNetwork net = gen_network(cfg);
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& g : gen_trajectories(net, cfg))
    for (std::size_t i = 0; i < g.clean.size(); ++i) {
      const geo::Offset o = geo::project_to_meters(cfg.anchor, g.data.traj.points[i]);
      total += std::hypot(o.dx - g.clean[i].dx, o.dy - g.clean[i].dy);
      ++n;
    }
  // Radial distance of a 2-D Gaussian has mean sigma * sqrt(pi / 2), about 18.8 m at 15 m.
  EXPECT_NEAR(total / static_cast<double>(n), cfg.noise_sigma * std::sqrt(M_PI / 2.0), 1.0);
}

TEST(Trajectories, SamplingStaysInRange) {
  const GenConfig cfg = small_config(100);
  const SyntheticNetwork net = gen_network(cfg);
  std::set<std::string> ids;
  for (const auto& g : gen_trajectories(net, cfg)) {
    const auto& pts = g.data.traj.points;
    ASSERT_GE(pts.size(), 2u);
    EXPECT_EQ(pts.front().t, 0.0);
    for (std::size_t i = 1; i < pts.size(); ++i) {
      const double dt = pts[i].t - pts[i - 1].t;
      EXPECT_GE(dt, cfg.interval_min - 1e-9);
      EXPECT_LE(dt, cfg.interval_max + 1e-9);
      const double step = std::hypot(g.clean[i].dx - g.clean[i - 1].dx, g.clean[i].dy - g.clean[i - 1].dy);
      EXPECT_LE(step, cfg.speed_max * dt + 1e-6);
    }
    EXPECT_TRUE(ids.insert(g.data.traj.id).second);
  }
}

TEST(Trajectories, SomeTakeDetours) {
  GenConfig cfg = small_config(300);
  const SyntheticNetwork net = gen_network(cfg);
  std::size_t detours = 0;
  for (const auto& g : gen_trajectories(net, cfg)) detours += g.detour ? 1 : 0;
  EXPECT_GT(detours, 0u);
  EXPECT_LT(detours, 60u);
  cfg.detour_fraction = 0.0;
  for (const auto& g : gen_trajectories(net, cfg)) EXPECT_FALSE(g.detour);
}

std::string serialized(const std::vector<GeneratedTrajectory>& gens, const std::filesystem::path& path) {
  std::vector<geo::LabeledTrajectory> data;
  for (const auto& g : gens) data.push_back(g.data);
  geo::write_trajectories(path, data);
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Trajectories, SameSeedGivesIdenticalFiles) {
  GenConfig cfg = small_config(50);
  const SyntheticNetwork net = gen_network(cfg);
  const auto path = std::filesystem::temp_directory_path() / "hstg_gen.tsv";
  const std::string a = serialized(gen_trajectories(net, cfg), path);
  const std::string b = serialized(gen_trajectories(net, cfg), path);
  EXPECT_EQ(a, b);
  cfg.seed = 43;
  EXPECT_NE(a, serialized(gen_trajectories(net, cfg), path));
  std::filesystem::remove(path);
}

TEST(Trajectories, EachTrajectoryHasItsOwnStream) {
  GenConfig cfg = small_config(20);
  const SyntheticNetwork net = gen_network(cfg);
  const auto all = gen_trajectories(net, cfg);
  const auto one = gen_trajectory(net, cfg, 13);
  EXPECT_EQ(one.data.true_roads, all[13].data.true_roads);
  ASSERT_EQ(one.data.traj.points.size(), all[13].data.traj.points.size());
  for (std::size_t i = 0; i < one.data.traj.points.size(); ++i) {
    EXPECT_EQ(one.data.traj.points[i].lon, all[13].data.traj.points[i].lon);
    EXPECT_EQ(one.data.traj.points[i].lat, all[13].data.traj.points[i].lat);
    EXPECT_EQ(one.data.traj.points[i].t, all[13].data.traj.points[i].t);
  }
}

TEST(Trajectories, RejectsBadConfigs) {
  GenConfig cfg = small_config(10);
  cfg.rows = 1;
  EXPECT_THROW(gen_network(cfg), ValidationError);
  cfg = small_config(10);
  cfg.noise_sigma = -1.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = small_config(10);
  cfg.interval_max = 0.5;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Split, FirstEightyPercentTrainInOrder) {
  for (std::size_t n : {5u, 6u, 9u, 10u, 101u}) {
    std::vector<int> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<int>(i);
    const auto [train, test] = split_dataset(v);
    EXPECT_EQ(train.size(), n * 4 / 5);
    EXPECT_EQ(train.size() + test.size(), n);
    for (std::size_t i = 0; i < train.size(); ++i) EXPECT_EQ(train[i], static_cast<int>(i));
    for (std::size_t i = 0; i < test.size(); ++i) EXPECT_EQ(test[i], static_cast<int>(train.size() + i));
  }
  EXPECT_THROW(split_dataset(std::vector<int>(4)), ValidationError);
}

TEST(Grid, CoversLatticeAndMargin) {
  const GenConfig cfg = small_config(1);
  const geo::GridSpec grid = grid_for(cfg, 100.0);
  EXPECT_EQ(grid.n_cols, 12u);
  EXPECT_EQ(grid.n_rows, 10u);
}

}  // namespace
