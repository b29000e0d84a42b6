#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hstg/atagraph/ata_graph.hpp"
#include "hstg/numerics/ops.hpp"
#include "hstg/numerics/param_store.hpp"

namespace hstg::ata {

using num::Tensor;

/// Attention coefficient alpha_ij: softmax over m in N_i of
/// (W h_i . W h_m) / sqrt(d), read at m = j. `w` is [D_in, D], `h` is
/// [N, D_in], d is the transformed width D.
inline double opt_gat_attention(const Tensor& w, const Tensor& h, std::size_t i, std::size_t j, std::span<const std::size_t> neighbors) {
  if (w.rank() != 2 || h.rank() != 2 || h.dim(1) != w.dim(0)) throw DimensionError("opt_gat_attention: W " + num::shape_str(w.shape()) + ", H " + num::shape_str(h.shape()));
  if (std::find(neighbors.begin(), neighbors.end(), j) == neighbors.end()) throw IndexError("opt_gat_attention: node " + std::to_string(j) + " is not a neighbor of " + std::to_string(i));
  const std::size_t din = w.dim(0);
  const std::size_t d = w.dim(1);
  auto transform = [&](std::size_t node) {
    if (node >= h.dim(0)) throw IndexError("opt_gat_attention: node outside feature matrix");
    std::vector<double> out(d, 0.0);
    for (std::size_t a = 0; a < din; ++a)
      for (std::size_t b = 0; b < d; ++b) out[b] += h.values()[node * din + a] * w.values()[a * d + b];
    return out;
  };
  const std::vector<double> wi = transform(i);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> scores;
  double target = 0.0;
  for (std::size_t m : neighbors) {
    const std::vector<double> wm = transform(m);
    double s = 0.0;
    for (std::size_t b = 0; b < d; ++b) s += wi[b] * wm[b];
    scores.push_back(s * inv_sqrt_d);
    if (m == j) target = scores.back();
  }
  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  return std::exp(target - mx) / z;
}

/// Sparse neighborhood attention: out_i = sum_{j in N_i} alpha_ij f_j with
/// alpha_i = softmax_j (f_i . f_j / sqrt(D)). `alphas`, when given, receives
/// the per-edge coefficients in CSR order.
inline Tensor neighbor_attention(const Tensor& f, const AtaGraph& g, std::vector<double>* alphas = nullptr) {
  if (f.rank() != 2 || f.dim(0) != g.n_nodes) throw DimensionError("neighbor_attention: features " + num::shape_str(f.shape()) + " for " + std::to_string(g.n_nodes) + " nodes");
  const std::size_t n = g.n_nodes;
  const std::size_t d = f.dim(1);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  auto fv = f.values();
  std::vector<double> alpha(g.n_edges());
  std::vector<double> out(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* fi = fv.data() + i * d;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) {
      const double* fj = fv.data() + g.neighbors[e] * d;
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += fi[k] * fj[k];
      alpha[e] = s * inv_sqrt_d;
      mx = std::max(mx, alpha[e]);
    }
    double z = 0.0;
    for (std::size_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) z += (alpha[e] = std::exp(alpha[e] - mx));
    for (std::size_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) {
      alpha[e] /= z;
      const double* fj = fv.data() + g.neighbors[e] * d;
      for (std::size_t k = 0; k < d; ++k) out[i * d + k] += alpha[e] * fj[k];
    }
  }
  if (alphas != nullptr) *alphas = alpha;
  Tensor r = num::detail::make_result("neighbor_attention", f.shape(), std::move(out), {&f});
  if (r.requires_grad()) {
    num::Node* fn = f.raw();
    num::Node* rn = r.raw();
    rn->backward = [fn, rn, &g, alpha = std::move(alpha), n, d, inv_sqrt_d] {
      double* gf = num::detail::grad_of(fn);
      const auto& fv = fn->value;
      std::vector<double> dalpha;
      for (std::size_t i = 0; i < n; ++i) {
        const double* go = rn->grad.data() + i * d;
        const std::size_t begin = g.offsets[i];
        const std::size_t end = g.offsets[i + 1];
        dalpha.assign(end - begin, 0.0);
        double dot = 0.0;
        for (std::size_t e = begin; e < end; ++e) {
          const std::size_t j = g.neighbors[e];
          double s = 0.0;
          for (std::size_t k = 0; k < d; ++k) {
            s += go[k] * fv[j * d + k];
            gf[j * d + k] += alpha[e] * go[k];
          }
          dalpha[e - begin] = s;
          dot += alpha[e] * s;
        }
        for (std::size_t e = begin; e < end; ++e) {
          const std::size_t j = g.neighbors[e];
          const double ds = alpha[e] * (dalpha[e - begin] - dot) * inv_sqrt_d;
          for (std::size_t k = 0; k < d; ++k) {
            gf[i * d + k] += ds * fv[j * d + k];
            gf[j * d + k] += ds * fv[i * d + k];
          }
        }
      }
    };
  }
  return r;
}

/// out_i = sum_{j in N_i} w_ij x_j for constant per-edge weights (CSR order).
inline Tensor neighbor_weighted_sum(const Tensor& x, const AtaGraph& g, std::vector<double> weights) {
  if (x.rank() != 2 || x.dim(0) != g.n_nodes) throw DimensionError("neighbor_weighted_sum: features " + num::shape_str(x.shape()));
  if (weights.size() != g.n_edges()) throw DimensionError("neighbor_weighted_sum: one weight per edge required");
  const std::size_t d = x.dim(1);
  auto xv = x.values();
  std::vector<double> out(g.n_nodes * d, 0.0);
  for (std::size_t i = 0; i < g.n_nodes; ++i)
    for (std::size_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e)
      for (std::size_t k = 0; k < d; ++k) out[i * d + k] += weights[e] * xv[g.neighbors[e] * d + k];
  Tensor r = num::detail::make_result("neighbor_weighted_sum", x.shape(), std::move(out), {&x});
  if (r.requires_grad()) {
    num::Node* xn = x.raw();
    num::Node* rn = r.raw();
    rn->backward = [xn, rn, &g, weights = std::move(weights), d] {
      double* gx = num::detail::grad_of(xn);
      for (std::size_t i = 0; i < g.n_nodes; ++i)
        for (std::size_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e)
          for (std::size_t k = 0; k < d; ++k) gx[g.neighbors[e] * d + k] += weights[e] * rn->grad[i * d + k];
    };
  }
  return r;
}

/// How the multi-head neighbor term is aggregated.
enum class Aggregation {
  kOptGat,  // dot-product attention per head
  kMean,    // uniform 1/|N_i| weights (GCN-style ablation)
};

struct GatParams {
  std::vector<Tensor> head_w;  // K x [D_in, D]
  Tensor neighbor_w;           // W_l: [D_in, D]
  Tensor out_proj;             // [2D, D]

  GatParams() = default;
  GatParams(num::ParamStore& store, const std::string& name, std::size_t d_in, std::size_t d, std::size_t heads) {
    if (heads == 0) throw ValidationError("GatParams: need at least one head");
    for (std::size_t k = 0; k < heads; ++k) head_w.push_back(store.create(name + ".head" + std::to_string(k), {d_in, d}, num::Init::kXavier));
    neighbor_w = store.create(name + ".w_l", {d_in, d}, num::Init::kXavier);
    out_proj = store.create(name + ".out", {2 * d, d}, num::Init::kXavier);
  }
};

/// One opt-GAT layer:
///   term1_i = (1/K) sum_k sum_{j in N_i} alpha^k_ij W^k h_j
///   term2_i = sum_{j in N_i} gamma_ij W_l h_j
///   h'_i    = [term1_i ; term2_i] * out_proj
/// Head k scores with the same W^k it aggregates with.
inline Tensor opt_gat_layer(const AtaGraph& g, const Tensor& h, const GatParams& p, Aggregation mode = Aggregation::kOptGat) {
  if (h.rank() != 2 || h.dim(0) != g.n_nodes) throw DimensionError("opt_gat_layer: H " + num::shape_str(h.shape()) + " for " + std::to_string(g.n_nodes) + " nodes");
  if (p.head_w.empty()) throw ValidationError("opt_gat_layer: no heads");
  std::vector<double> uniform;
  if (mode == Aggregation::kMean) {
    uniform.resize(g.n_edges());
    for (std::size_t i = 0; i < g.n_nodes; ++i)
      for (std::size_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) uniform[e] = 1.0 / static_cast<double>(g.offsets[i + 1] - g.offsets[i]);
  }
  Tensor heads_sum;
  for (const Tensor& w : p.head_w) {
    Tensor transformed = num::matmul(h, w);
    Tensor agg = mode == Aggregation::kOptGat ? neighbor_attention(transformed, g) : neighbor_weighted_sum(transformed, g, uniform);
    heads_sum = heads_sum.defined() ? num::add(heads_sum, agg) : agg;
  }
  Tensor term1 = num::scale(heads_sum, 1.0 / static_cast<double>(p.head_w.size()));
  Tensor term2 = neighbor_weighted_sum(num::matmul(h, p.neighbor_w), g, g.gamma);
  return num::matmul(num::concat_last({term1, term2}), p.out_proj);
}

}  // namespace hstg::ata
