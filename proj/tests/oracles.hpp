#pragma once

#include <algorithm>
#include <cmath>
#include <iterator>
#include <map>
#include <set>
#include <vector>

#include "hstg/atagraph/opt_gat.hpp"
#include "hstg/eval/metrics.hpp"

namespace hstg::testing {

using ata::AtaGraph;
using ata::Aggregation;
using ata::GatParams;

inline std::vector<std::vector<int>> dense_adjacency(const geo::GridSpec& spec, double threshold) {
  const std::size_t n = spec.n_cells();
  std::vector<std::vector<int>> adj(n, std::vector<int>(n, 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto a = geo::cell_centroid_m(spec, geo::cell_from_flat(spec, i));
      const auto b = geo::cell_centroid_m(spec, geo::cell_from_flat(spec, j));
      adj[i][j] = std::hypot(a.dx - b.dx, a.dy - b.dy) < threshold ? 1 : 0;
    }
  return adj;
}

/// h [n, din] times w [din, d] by plain loops.
inline std::vector<std::vector<double>> dense_transform(const num::Tensor& h, const num::Tensor& w) {
  const std::size_t n = h.dim(0);
  const std::size_t din = w.dim(0);
  const std::size_t d = w.dim(1);
  std::vector<std::vector<double>> out(n, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < din; ++a)
      for (std::size_t b = 0; b < d; ++b) out[i][b] += h.at(i * din + a) * w.at(a * d + b);
  return out;
}

/// Dense reference of one layer: attention over the full N x N score matrix
/// with non-neighbors masked out.
inline std::vector<double> dense_gat_layer(const AtaGraph& g, const num::Tensor& h, const GatParams& p, Aggregation mode) {
  const std::size_t n = g.n_nodes;
  std::vector<std::vector<int>> adj(n, std::vector<int>(n, 0));
  std::vector<std::vector<double>> gamma(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0.0;
    for (std::size_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) adj[i][g.neighbors[e]] = 1;
    for (std::size_t j = 0; j < n; ++j)
      if (adj[i][j]) z += 1.0 + static_cast<double>(g.counts[j]);
    for (std::size_t j = 0; j < n; ++j)
      if (adj[i][j]) gamma[i][j] = (1.0 + static_cast<double>(g.counts[j])) / z;
  }
  const std::size_t d = p.neighbor_w.dim(1);
  std::vector<std::vector<double>> term1(n, std::vector<double>(d, 0.0));
  for (const auto& w : p.head_w) {
    const auto f = dense_transform(h, w);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> a(n, 0.0);
      double z = 0.0;
      std::size_t deg = 0;
      for (std::size_t j = 0; j < n; ++j) deg += static_cast<std::size_t>(adj[i][j]);
      for (std::size_t j = 0; j < n; ++j) {
        if (!adj[i][j]) continue;
        if (mode == Aggregation::kMean) {
          a[j] = 1.0 / static_cast<double>(deg);
          continue;
        }
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += f[i][k] * f[j][k];
        a[j] = std::exp(s / std::sqrt(static_cast<double>(d)));
        z += a[j];
      }
      if (mode == Aggregation::kOptGat)
        for (double& v : a) v /= z;
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < d; ++k) term1[i][k] += a[j] * f[j][k] / static_cast<double>(p.head_w.size());
    }
  }
  const auto fl = dense_transform(h, p.neighbor_w);
  std::vector<double> out(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> cat(2 * d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
      cat[k] = term1[i][k];
      for (std::size_t j = 0; j < n; ++j) cat[d + k] += gamma[i][j] * fl[j][k];
    }
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t k = 0; k < 2 * d; ++k) out[i * d + c] += cat[k] * p.out_proj.at(k * d + c);
  }
  return out;
}

/// Direct evaluation of length-weighted precision, recall and F1. Set mode
/// counts each distinct road once; multiset mode intersects sorted lists.
struct OracleScore {
  double p = 0.0;
  double r = 0.0;
  double f1 = 0.0;
};

inline OracleScore oracle_route_metrics(const std::vector<geo::RoadId>& matched, const std::vector<geo::RoadId>& truth,
                                        const std::map<geo::RoadId, double>& len, bool multiset) {
  std::vector<geo::RoadId> m = matched;
  std::vector<geo::RoadId> g = truth;
  std::sort(m.begin(), m.end());
  std::sort(g.begin(), g.end());
  if (!multiset) {
    m.erase(std::unique(m.begin(), m.end()), m.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
  }
  std::vector<geo::RoadId> both;
  std::set_intersection(m.begin(), m.end(), g.begin(), g.end(), std::back_inserter(both));
  auto total = [&](const std::vector<geo::RoadId>& ids) {
    double s = 0.0;
    for (auto id : ids) s += len.at(id);
    return s;
  };
  const double inter = total(both);
  if (inter == 0.0) return {};
  const double p = inter / total(m);
  const double r = inter / total(g);
  return {p, r, 2.0 * p * r / (p + r)};
}

}  // namespace hstg::testing
