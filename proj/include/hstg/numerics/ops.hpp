#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hstg/numerics/tensor.hpp"

namespace hstg::num {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

namespace detail {

inline std::size_t last_dim(const Tensor& t) { return t.shape().back(); }
inline std::size_t rows_of(const Tensor& t) { return t.size() / t.shape().back(); }

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace detail

/// Standard matrix product of two rank-2 tensors.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  MatMap(out.data(), m, n).noalias() = ConstMatMap(a.values().data(), m, k) * ConstMatMap(b.values().data(), k, n);
  Tensor r = detail::make_result("matmul", {a.dim(0), b.dim(1)}, std::move(out), {&a, &b});
  if (r.requires_grad()) {
    Node* an = a.raw();
    Node* bn = b.raw();
    Node* rn = r.raw();
    rn->backward = [an, bn, rn, m, k, n] {
      ConstMatMap g(rn->grad.data(), m, n);
      if (double* ga = detail::grad_of(an)) MatMap(ga, m, k).noalias() += g * ConstMatMap(bn->value.data(), k, n).transpose();
      if (double* gb = detail::grad_of(bn)) MatMap(gb, k, n).noalias() += ConstMatMap(an->value.data(), m, k).transpose() * g;
    };
  }
  return r;
}

/// Affine map over the last axis: x[..., in] * w[in, out] + bias[out].
/// `bias` may be an undefined tensor.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor()) {
  if (w.rank() != 2 || detail::last_dim(x) != w.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " with weight " + shape_str(w.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != w.dim(1))) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " for weight " + shape_str(w.shape()));
  }
  const auto m = static_cast<Eigen::Index>(detail::rows_of(x));
  const auto k = static_cast<Eigen::Index>(w.dim(0));
  const auto n = static_cast<Eigen::Index>(w.dim(1));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  MatMap o(out.data(), m, n);
  o.noalias() = ConstMatMap(x.values().data(), m, k) * ConstMatMap(w.values().data(), k, n);
  if (bias.defined()) {
    o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.values().data(), n);
  }
  Shape shape = x.shape();
  shape.back() = w.dim(1);
  Tensor r = bias.defined() ? detail::make_result("linear", std::move(shape), std::move(out), {&x, &w, &bias})
                            : detail::make_result("linear", std::move(shape), std::move(out), {&x, &w});
  if (r.requires_grad()) {
    Node* xn = x.raw();
    Node* wn = w.raw();
    Node* bn = bias.defined() ? bias.raw() : nullptr;
    Node* rn = r.raw();
    rn->backward = [xn, wn, bn, rn, m, k, n] {
      ConstMatMap g(rn->grad.data(), m, n);
      if (double* gx = detail::grad_of(xn)) MatMap(gx, m, k).noalias() += g * ConstMatMap(wn->value.data(), k, n).transpose();
      if (double* gw = detail::grad_of(wn)) MatMap(gw, k, n).noalias() += ConstMatMap(xn->value.data(), m, k).transpose() * g;
      if (bn != nullptr) {
        if (double* gb = detail::grad_of(bn)) Eigen::Map<Eigen::RowVectorXd>(gb, n) += g.colwise().sum();
      }
    };
  }
  return r;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  Tensor r = detail::make_result("add", a.shape(), std::move(out), {&a, &b});
  if (r.requires_grad()) {
    Node* an = a.raw();
    Node* bn = b.raw();
    Node* rn = r.raw();
    rn->backward = [an, bn, rn] {
      const std::size_t n = rn->grad.size();
      if (double* ga = detail::grad_of(an)) for (std::size_t i = 0; i < n; ++i) ga[i] += rn->grad[i];
      if (double* gb = detail::grad_of(bn)) for (std::size_t i = 0; i < n; ++i) gb[i] += rn->grad[i];
    };
  }
  return r;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  Tensor r = detail::make_result("sub", a.shape(), std::move(out), {&a, &b});
  if (r.requires_grad()) {
    Node* an = a.raw();
    Node* bn = b.raw();
    Node* rn = r.raw();
    rn->backward = [an, bn, rn] {
      const std::size_t n = rn->grad.size();
      if (double* ga = detail::grad_of(an)) for (std::size_t i = 0; i < n; ++i) ga[i] += rn->grad[i];
      if (double* gb = detail::grad_of(bn)) for (std::size_t i = 0; i < n; ++i) gb[i] -= rn->grad[i];
    };
  }
  return r;
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  Tensor r = detail::make_result("mul", a.shape(), std::move(out), {&a, &b});
  if (r.requires_grad()) {
    Node* an = a.raw();
    Node* bn = b.raw();
    Node* rn = r.raw();
    rn->backward = [an, bn, rn] {
      const std::size_t n = rn->grad.size();
      if (double* ga = detail::grad_of(an)) for (std::size_t i = 0; i < n; ++i) ga[i] += rn->grad[i] * bn->value[i];
      if (double* gb = detail::grad_of(bn)) for (std::size_t i = 0; i < n; ++i) gb[i] += rn->grad[i] * an->value[i];
    };
  }
  return r;
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= c;
  Tensor r = detail::make_result("scale", a.shape(), std::move(out), {&a});
  if (r.requires_grad()) {
    Node* an = a.raw();
    Node* rn = r.raw();
    rn->backward = [an, rn, c] {
      double* ga = detail::grad_of(an);
      for (std::size_t i = 0; i < rn->grad.size(); ++i) ga[i] += c * rn->grad[i];
    };
  }
  return r;
}

/// Multiplies row i of x (viewed as [rows, last]) by the constant coef[i].
inline Tensor row_scale(const Tensor& x, std::vector<double> coef) {
  const std::size_t rows = detail::rows_of(x);
  const std::size_t d = detail::last_dim(x);
  if (coef.size() != rows) throw DimensionError("row_scale: " + std::to_string(coef.size()) + " coefficients for " + std::to_string(rows) + " rows");
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = coef[i] * xv[i * d + j];
  Tensor r = detail::make_result("row_scale", x.shape(), std::move(out), {&x});
  if (r.requires_grad()) {
    Node* xn = x.raw();
    Node* rn = r.raw();
    rn->backward = [xn, rn, coef = std::move(coef), rows, d] {
      double* gx = detail::grad_of(xn);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += coef[i] * rn->grad[i * d + j];
    };
  }
  return r;
}

/// Concatenates along the last axis; all leading extents must agree.
inline Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_last: no inputs");
  const std::size_t rows = detail::rows_of(parts[0]);
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    Shape pl(p.shape().begin(), p.shape().end() - 1);
    if (pl != lead) throw DimensionError("concat_last: leading shape " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    widths.push_back(detail::last_dim(p));
    total += widths.back();
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].values();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(pv.data() + i * widths[k], widths[k], out.data() + i * total + offset);
    offset += widths[k];
  }
  Shape shape = lead;
  shape.push_back(total);
  Tensor r = detail::make_result("concat_last", std::move(shape), std::move(out), parts);
  if (r.requires_grad()) {
    std::vector<Node*> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.raw());
    Node* rn = r.raw();
    rn->backward = [nodes, widths, rn, rows, total] {
      std::size_t off = 0;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (double* g = detail::grad_of(nodes[k])) {
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += rn->grad[i * total + off + j];
        }
        off += widths[k];
      }
    };
  }
  return r;
}

/// Stacks rank-2 tensors with equal column counts along the first axis.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t d = parts[0].rank() == 2 ? parts[0].dim(1) : 0;
  std::size_t rows = 0;
  std::vector<double> out;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(1) != d) throw DimensionError("concat_rows: " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    rows += p.dim(0);
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  Tensor r = detail::make_result("concat_rows", {rows, d}, std::move(out), parts);
  if (r.requires_grad()) {
    std::vector<Node*> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.raw());
    Node* rn = r.raw();
    rn->backward = [nodes, rn] {
      std::size_t off = 0;
      for (Node* n : nodes) {
        if (double* g = detail::grad_of(n))
          for (std::size_t i = 0; i < n->value.size(); ++i) g[i] += rn->grad[off + i];
        off += n->value.size();
      }
    };
  }
  return r;
}

/// Embedding lookup: rows of table[V, D] selected by `index`; the result has
/// shape `lead + {D}` where product(lead) == index.size().
inline Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& index, Shape lead = {}) {
  if (table.rank() != 2) throw DimensionError("gather_rows: table must be rank 2, got " + shape_str(table.shape()));
  if (lead.empty()) lead = {index.size()};
  if (shape_size(lead) != index.size()) throw DimensionError("gather_rows: lead shape " + shape_str(lead) + " vs " + std::to_string(index.size()) + " indices");
  const std::size_t v = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<double> out(index.size() * d);
  auto tv = table.values();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= v) throw IndexError("gather_rows: index " + std::to_string(index[i]) + " outside table of " + std::to_string(v) + " rows");
    std::copy_n(tv.data() + index[i] * d, d, out.data() + i * d);
  }
  lead.push_back(d);
  Tensor r = detail::make_result("gather_rows", std::move(lead), std::move(out), {&table});
  if (r.requires_grad()) {
    Node* tn = table.raw();
    Node* rn = r.raw();
    rn->backward = [tn, rn, index, d] {
      double* g = detail::grad_of(tn);
      for (std::size_t i = 0; i < index.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) g[index[i] * d + j] += rn->grad[i * d + j];
    };
  }
  return r;
}

/// Rows of x viewed as [rows, last]; out-of-range rows raise IndexError.
inline Tensor take_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  const std::size_t n = detail::rows_of(x);
  const std::size_t d = detail::last_dim(x);
  std::vector<double> out(rows.size() * d);
  auto xv = x.values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw IndexError("take_rows: row " + std::to_string(rows[i]) + " of " + std::to_string(n));
    std::copy_n(xv.data() + rows[i] * d, d, out.data() + i * d);
  }
  Tensor r = detail::make_result("take_rows", {rows.size(), d}, std::move(out), {&x});
  if (r.requires_grad()) {
    Node* xn = x.raw();
    Node* rn = r.raw();
    rn->backward = [xn, rn, rows, d] {
      double* g = detail::grad_of(xn);
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) g[rows[i] * d + j] += rn->grad[i * d + j];
    };
  }
  return r;
}

/// out[i] = w_a[i] * table[a[i]] + w_b[i] * table[b[i]]: a two-row convex blend
/// used for slot interpolation.
inline Tensor blend_rows(const Tensor& table, const std::vector<std::size_t>& a, const std::vector<double>& wa,
                         const std::vector<std::size_t>& b, const std::vector<double>& wb) {
  if (table.rank() != 2) throw DimensionError("blend_rows: table must be rank 2");
  const std::size_t n = a.size();
  if (b.size() != n || wa.size() != n || wb.size() != n) throw DimensionError("blend_rows: argument lengths differ");
  const std::size_t v = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<double> out(n * d);
  auto tv = table.values();
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] >= v || b[i] >= v) throw IndexError("blend_rows: row index outside table");
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = wa[i] * tv[a[i] * d + j] + wb[i] * tv[b[i] * d + j];
  }
  Tensor r = detail::make_result("blend_rows", {n, d}, std::move(out), {&table});
  if (r.requires_grad()) {
    Node* tn = table.raw();
    Node* rn = r.raw();
    rn->backward = [tn, rn, a, b, wa, wb, d] {
      double* g = detail::grad_of(tn);
      for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) {
          g[a[i] * d + j] += wa[i] * rn->grad[i * d + j];
          g[b[i] * d + j] += wb[i] * rn->grad[i * d + j];
        }
    };
  }
  return r;
}

/// Tanh-approximated GELU.
inline Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = xv[i];
    out[i] = 0.5 * u * (1.0 + std::tanh(kC * (u + kA * u * u * u)));
  }
  Tensor r = detail::make_result("gelu", x.shape(), std::move(out), {&x});
  if (r.requires_grad()) {
    Node* xn = x.raw();
    Node* rn = r.raw();
    rn->backward = [xn, rn] {
      double* g = detail::grad_of(xn);
      for (std::size_t i = 0; i < rn->grad.size(); ++i) {
        const double u = xn->value[i];
        const double t = std::tanh(kC * (u + kA * u * u * u));
        const double dt = (1.0 - t * t) * kC * (1.0 + 3.0 * kA * u * u);
        g[i] += rn->grad[i] * (0.5 * (1.0 + t) + 0.5 * u * dt);
      }
    };
  }
  return r;
}

/// Normalizes each last-axis row to zero mean / unit variance, then applies
/// gain and shift.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps = 1e-5) {
  const std::size_t d = detail::last_dim(x);
  if (gain.size() != d || shift.size() != d) throw DimensionError("layer_norm: gain/shift size vs " + shape_str(x.shape()));
  const std::size_t rows = detail::rows_of(x);
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  auto xv = x.values();
  auto gv = gain.values();
  auto sv = shift.values();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = xv.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mean) * inv_std[i];
      out[i * d + j] = xhat[i * d + j] * gv[j] + sv[j];
    }
  }
  Tensor r = detail::make_result("layer_norm", x.shape(), std::move(out), {&x, &gain, &shift});
  if (r.requires_grad()) {
    Node* xn = x.raw();
    Node* gn = gain.raw();
    Node* sn = shift.raw();
    Node* rn = r.raw();
    rn->backward = [xn, gn, sn, rn, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d] {
      double* gx = detail::grad_of(xn);
      double* gg = detail::grad_of(gn);
      double* gs = detail::grad_of(sn);
      std::vector<double> dxhat(d);
      for (std::size_t i = 0; i < rows; ++i) {
        const double* go = rn->grad.data() + i * d;
        const double* xh = xhat.data() + i * d;
        double sum_dxhat = 0.0;
        double sum_dxhat_xhat = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          if (gg) gg[j] += go[j] * xh[j];
          if (gs) gs[j] += go[j];
          dxhat[j] = go[j] * gn->value[j];
          sum_dxhat += dxhat[j];
          sum_dxhat_xhat += dxhat[j] * xh[j];
        }
        if (gx) {
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j)
            gx[i * d + j] += inv_std[i] * (dxhat[j] - inv_d * sum_dxhat - xh[j] * inv_d * sum_dxhat_xhat);
        }
      }
    };
  }
  return r;
}

/// Softmax along `axis`, stabilized by subtracting the slice maximum.
inline Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw DimensionError("softmax: axis " + std::to_string(axis) + " for " + shape_str(x.shape()));
  const std::size_t n = x.dim(axis);
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) z += (out[base + j * inner] = std::exp(xv[base + j * inner] - mx));
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  Tensor r = detail::make_result("softmax", x.shape(), std::move(out), {&x});
  if (r.requires_grad()) {
    Node* xn = x.raw();
    Node* rn = r.raw();
    rn->backward = [xn, rn, outer, inner, n] {
      double* gx = detail::grad_of(xn);
      const auto& y = rn->value;
      const auto& gy = rn->grad;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += gy[base + j * inner] * y[base + j * inner];
          for (std::size_t j = 0; j < n; ++j) gx[base + j * inner] += y[base + j * inner] * (gy[base + j * inner] - dot);
        }
    };
  }
  return r;
}

/// Marker for rows excluded from cross_entropy (padding).
inline constexpr int kIgnoreIndex = -1;

/// Multi-class cross-entropy summed over rows: -sum_l log softmax(logits_l)[t_l].
/// Rows whose target is kIgnoreIndex contribute nothing.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  const std::size_t rows = detail::rows_of(logits);
  const std::size_t c = detail::last_dim(logits);
  if (targets.size() != rows) throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) + " rows");
  std::vector<double> probs(logits.size());
  auto lv = logits.values();
  double loss = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    const int t = targets[i];
    if (t == kIgnoreIndex) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= c) throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0, " + std::to_string(c) + ")");
    const double* row = lv.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (probs[i * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= z;
    loss -= (row[t] - mx) - std::log(z);
  }
  Tensor r = detail::make_result("cross_entropy", {1}, {loss}, {&logits});
  if (r.requires_grad()) {
    Node* ln = logits.raw();
    Node* rn = r.raw();
    rn->backward = [ln, rn, probs = std::move(probs), targets, rows, c] {
      double* g = detail::grad_of(ln);
      const double go = rn->grad[0];
      for (std::size_t i = 0; i < rows; ++i) {
        if (targets[i] == kIgnoreIndex) continue;
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += go * probs[i * c + j];
        g[i * c + static_cast<std::size_t>(targets[i])] -= go;
      }
    };
  }
  return r;
}

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor r = detail::make_result("sum", {1}, {s}, {&x});
  if (r.requires_grad()) {
    Node* xn = x.raw();
    Node* rn = r.raw();
    rn->backward = [xn, rn] {
      double* g = detail::grad_of(xn);
      for (std::size_t i = 0; i < xn->value.size(); ++i) g[i] += rn->grad[0];
    };
  }
  return r;
}

/// sum over groups u of sqrt(mean_{i in u} ||pred_i - target_i||^2), where pred
/// is [rows, d] and each group lists row indices. Groups must be non-empty.
inline Tensor grouped_rmse_sum(const Tensor& pred, const std::vector<double>& target,
                               const std::vector<std::vector<std::size_t>>& groups) {
  const std::size_t d = detail::last_dim(pred);
  const std::size_t rows = detail::rows_of(pred);
  if (target.size() != pred.size()) throw DimensionError("grouped_rmse_sum: target size differs from prediction");
  auto pv = pred.values();
  std::vector<double> rmse(groups.size());
  double total = 0.0;
  for (std::size_t u = 0; u < groups.size(); ++u) {
    if (groups[u].empty()) throw ValidationError("grouped_rmse_sum: empty group");
    double acc = 0.0;
    for (std::size_t i : groups[u]) {
      if (i >= rows) throw IndexError("grouped_rmse_sum: row outside prediction");
      for (std::size_t j = 0; j < d; ++j) {
        const double e = pv[i * d + j] - target[i * d + j];
        acc += e * e;
      }
    }
    rmse[u] = std::sqrt(acc / static_cast<double>(groups[u].size()));
    total += rmse[u];
  }
  Tensor r = detail::make_result("grouped_rmse_sum", {1}, {total}, {&pred});
  if (r.requires_grad()) {
    Node* pn = pred.raw();
    Node* rn = r.raw();
    rn->backward = [pn, rn, target, groups, rmse = std::move(rmse), d] {
      double* g = detail::grad_of(pn);
      const double go = rn->grad[0];
      for (std::size_t u = 0; u < groups.size(); ++u) {
        // d sqrt(m)/d pred = (pred - target) / (n * rmse); zero at an exact fit.
        if (rmse[u] == 0.0) continue;
        const double coef = go / (static_cast<double>(groups[u].size()) * rmse[u]);
        for (std::size_t i : groups[u])
          for (std::size_t j = 0; j < d; ++j) g[i * d + j] += coef * (pn->value[i * d + j] - target[i * d + j]);
      }
    };
  }
  return r;
}

/// Same values, new shape; gradient passes through unchanged.
inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  Tensor r = detail::make_result("reshape", std::move(shape), std::move(out), {&x});
  if (r.requires_grad()) {
    Node* xn = x.raw();
    Node* rn = r.raw();
    rn->backward = [xn, rn] {
      double* g = detail::grad_of(xn);
      for (std::size_t i = 0; i < rn->grad.size(); ++i) g[i] += rn->grad[i];
    };
  }
  return r;
}

}  // namespace hstg::num
