#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "hstg/geo/geo.hpp"
#include "hstg/text.hpp"

namespace hstg::ata {

/// Adaptive Trajectory Adjacency Graph over grid cells, stored as CSR.
/// Every node lists itself; edges join cells whose centroids lie closer than
/// `threshold`; gamma holds count-derived neighbor weights per row.
struct AtaGraph {
  std::size_t n_nodes = 0;
  double threshold = 0.0;
  double cell_size = 0.0;
  std::vector<std::size_t> offsets;    // n_nodes + 1
  std::vector<std::size_t> neighbors;  // column index per edge
  std::vector<double> gamma;           // weight per edge, rows sum to 1
  std::vector<std::size_t> counts;     // trajectory points per cell

  std::span<const std::size_t> neighbors_of(std::size_t i) const {
    return std::span<const std::size_t>(neighbors).subspan(offsets[i], offsets[i + 1] - offsets[i]);
  }
  std::span<const double> gamma_of(std::size_t i) const {
    return std::span<const double>(gamma).subspan(offsets[i], offsets[i + 1] - offsets[i]);
  }
  std::size_t n_edges() const { return neighbors.size(); }
};

/// Laplace-smoothed weights: gamma_ij = (1 + count_j) / sum_{m in N_i} (1 + count_m).
inline void assign_gamma(AtaGraph& g) {
  g.gamma.assign(g.neighbors.size(), 0.0);
  for (std::size_t i = 0; i < g.n_nodes; ++i) {
    double z = 0.0;
    for (std::size_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) z += 1.0 + static_cast<double>(g.counts[g.neighbors[e]]);
    for (std::size_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) g.gamma[e] = (1.0 + static_cast<double>(g.counts[g.neighbors[e]])) / z;
  }
}

inline AtaGraph build_ata_graph(const geo::GridSpec& spec, const std::vector<geo::Trajectory>& trajectories, double threshold) {
  if (!(threshold > 0.0)) throw ValidationError("build_ata_graph: threshold must be positive");
  if (spec.n_cells() == 0) throw ValidationError("build_ata_graph: empty grid");
  spec.validate();
  AtaGraph g;
  g.n_nodes = spec.n_cells();
  g.threshold = threshold;
  g.cell_size = spec.cell_size;
  g.counts.assign(g.n_nodes, 0);
  for (const auto& t : trajectories)
    for (const auto& p : t.points) ++g.counts[geo::point_to_cell(spec, p).flat];

  const auto reach = static_cast<long>(std::floor(threshold / spec.cell_size)) + 1;
  const auto rows = static_cast<long>(spec.n_rows);
  const auto cols = static_cast<long>(spec.n_cols);
  g.offsets.push_back(0);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      for (long nr = std::max(0L, r - reach); nr <= std::min(rows - 1, r + reach); ++nr)
        for (long nc = std::max(0L, c - reach); nc <= std::min(cols - 1, c + reach); ++nc) {
          const double dist = spec.cell_size * std::hypot(static_cast<double>(nr - r), static_cast<double>(nc - c));
          if (dist < threshold) g.neighbors.push_back(static_cast<std::size_t>(nr * cols + nc));
        }
      g.offsets.push_back(g.neighbors.size());
    }
  }
  assign_gamma(g);
  return g;
}

inline std::string graph_header(std::size_t n_nodes, double threshold, double cell_size) {
  return "# ata_graph\tn_nodes=" + std::to_string(n_nodes) + "\tthreshold=" + text::fmt(threshold) + "\tcell_size=" + text::fmt(cell_size);
}

/// Header line, then one `node<TAB>neighbor<TAB>gamma` line per edge.
inline void write_graph_cache(const std::filesystem::path& path, const AtaGraph& g) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << graph_header(g.n_nodes, g.threshold, g.cell_size) << '\n';
  for (std::size_t i = 0; i < g.n_nodes; ++i)
    for (std::size_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) out << i << '\t' << g.neighbors[e] << '\t' << text::fmt(g.gamma[e]) << '\n';
}

/// Loads a cached graph; returns false when the file is absent or its header
/// does not describe the requested grid.
inline bool read_graph_cache(const std::filesystem::path& path, std::size_t n_nodes, double threshold, double cell_size, AtaGraph& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::string line;
  if (!std::getline(in, line) || line != graph_header(n_nodes, threshold, cell_size)) return false;
  AtaGraph g;
  g.n_nodes = n_nodes;
  g.threshold = threshold;
  g.cell_size = cell_size;
  g.offsets.assign(1, 0);
  std::size_t line_no = 1;
  std::size_t current = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    auto cols = text::split(line, '\t');
    if (cols.size() != 3) throw ValidationError(where + ": expected node, neighbor, gamma");
    const auto node = static_cast<std::size_t>(text::parse_int(cols[0], where));
    const auto nb = static_cast<std::size_t>(text::parse_int(cols[1], where));
    if (node >= n_nodes || nb >= n_nodes || node < current) throw ValidationError(where + ": edge out of order or range");
    while (current < node) {
      g.offsets.push_back(g.neighbors.size());
      ++current;
    }
    g.neighbors.push_back(nb);
    g.gamma.push_back(text::parse_double(cols[2], where));
  }
  while (g.offsets.size() < n_nodes + 1) g.offsets.push_back(g.neighbors.size());
  g.counts.assign(n_nodes, 0);
  out = std::move(g);
  return true;
}

}  // namespace hstg::ata
