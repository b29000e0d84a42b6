#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hstg/numerics/ops.hpp"

namespace hstg::num {

/// Collects every attention probability matrix computed while alive
/// (one entry per batch element and head). Test hook.
class AttentionProbe {
 public:
  struct Record {
    std::size_t rows;
    std::size_t cols;
    std::vector<std::uint8_t> allowed;  // rows * cols, 1 where the key was visible
    std::vector<double> probs;
  };

  AttentionProbe() : previous_(current()) { current() = this; }
  ~AttentionProbe() { current() = previous_; }
  AttentionProbe(const AttentionProbe&) = delete;
  AttentionProbe& operator=(const AttentionProbe&) = delete;

  std::vector<Record> records;

  static AttentionProbe*& current() {
    static thread_local AttentionProbe* probe = nullptr;
    return probe;
  }

 private:
  AttentionProbe* previous_;
};

/// Which keys a query may attend to.
struct AttentionMask {
  std::vector<std::uint8_t> key_valid;  // batch * key_len; empty means all valid
  bool causal = false;
};

/// Scaled dot-product multi-head attention over already-projected inputs.
/// q: [B, Lq, D], k and v: [B, Lk, D]; D is split into `heads` slices of D/heads.
/// Masked keys get probability exactly zero (additive -inf).
inline Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                                   const AttentionMask& mask = {}) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3 || k.shape() != v.shape() || q.dim(0) != k.dim(0) ||
      q.dim(2) != k.dim(2)) {
    throw DimensionError("attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " + shape_str(v.shape()));
  }
  const std::size_t batch = q.dim(0);
  const std::size_t lq = q.dim(1);
  const std::size_t lk = k.dim(1);
  const std::size_t d = q.dim(2);
  if (heads == 0 || d % heads != 0) throw DimensionError("attention: " + std::to_string(heads) + " heads do not divide width " + std::to_string(d));
  if (!mask.key_valid.empty() && mask.key_valid.size() != batch * lk) throw DimensionError("attention: key mask size");
  if (mask.causal && lq != lk) throw DimensionError("attention: causal mask needs square attention");
  const std::size_t dh = d / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  using Strided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
  using StridedMut = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
  const auto stride = Eigen::OuterStride<>(static_cast<Eigen::Index>(d));
  const auto elq = static_cast<Eigen::Index>(lq);
  const auto elk = static_cast<Eigen::Index>(lk);
  const auto edh = static_cast<Eigen::Index>(dh);

  auto visible = [&mask, lk](std::size_t b, std::size_t i, std::size_t j) {
    if (mask.causal && j > i) return false;
    return mask.key_valid.empty() || mask.key_valid[b * lk + j] != 0;
  };

  std::vector<double> out(batch * lq * d);
  std::vector<double> probs(batch * heads * lq * lk);
  auto qv = q.values();
  auto kv = k.values();
  auto vv = v.values();
  AttentionProbe* probe = AttentionProbe::current();
  RowMat scores(elq, elk);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      Strided qh(qv.data() + b * lq * d + h * dh, elq, edh, stride);
      Strided kh(kv.data() + b * lk * d + h * dh, elk, edh, stride);
      Strided vh(vv.data() + b * lk * d + h * dh, elk, edh, stride);
      scores.noalias() = qh * kh.transpose();
      MatMap p(probs.data() + (b * heads + h) * lq * lk, elq, elk);
      for (std::size_t i = 0; i < lq; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < lk; ++j)
          if (visible(b, i, j)) mx = std::max(mx, scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * scale_factor);
        double z = 0.0;
        for (std::size_t j = 0; j < lk; ++j) {
          const auto ii = static_cast<Eigen::Index>(i);
          const auto jj = static_cast<Eigen::Index>(j);
          p(ii, jj) = visible(b, i, j) ? std::exp(scores(ii, jj) * scale_factor - mx) : 0.0;
          z += p(ii, jj);
        }
        // A query that sees no key (only possible for padded rows) outputs zero.
        if (z > 0.0) p.row(static_cast<Eigen::Index>(i)) /= z;
      }
      StridedMut oh(out.data() + b * lq * d + h * dh, elq, edh, stride);
      oh.noalias() = p * vh;
      if (probe != nullptr) {
        AttentionProbe::Record rec{lq, lk, std::vector<std::uint8_t>(lq * lk), std::vector<double>(p.data(), p.data() + lq * lk)};
        for (std::size_t i = 0; i < lq; ++i)
          for (std::size_t j = 0; j < lk; ++j) rec.allowed[i * lk + j] = visible(b, i, j) ? 1 : 0;
        probe->records.push_back(std::move(rec));
      }
    }
  }
  Tensor r = detail::make_result("multi_head_attention", q.shape(), std::move(out), {&q, &k, &v});
  if (r.requires_grad()) {
    Node* qn = q.raw();
    Node* kn = k.raw();
    Node* vn = v.raw();
    Node* rn = r.raw();
    rn->backward = [qn, kn, vn, rn, probs = std::move(probs), batch, heads, lq, lk, d, dh, scale_factor] {
      const auto stride = Eigen::OuterStride<>(static_cast<Eigen::Index>(d));
      const auto elq = static_cast<Eigen::Index>(lq);
      const auto elk = static_cast<Eigen::Index>(lk);
      const auto edh = static_cast<Eigen::Index>(dh);
      double* gq = detail::grad_of(qn);
      double* gk = detail::grad_of(kn);
      double* gv = detail::grad_of(vn);
      RowMat dp(elq, elk);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          Strided go(rn->grad.data() + b * lq * d + h * dh, elq, edh, stride);
          Strided qh(qn->value.data() + b * lq * d + h * dh, elq, edh, stride);
          Strided kh(kn->value.data() + b * lk * d + h * dh, elk, edh, stride);
          Strided vh(vn->value.data() + b * lk * d + h * dh, elk, edh, stride);
          ConstMatMap p(probs.data() + (b * heads + h) * lq * lk, elq, elk);
          if (gv) StridedMut(gv + b * lk * d + h * dh, elk, edh, stride).noalias() += p.transpose() * go;
          if (!gq && !gk) continue;
          dp.noalias() = go * vh.transpose();
          // dS = P o (dP - rowsum(P o dP)), folded with the score scale.
          for (Eigen::Index i = 0; i < elq; ++i) {
            const double dot = p.row(i).dot(dp.row(i));
            dp.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix() * scale_factor;
          }
          if (gq) StridedMut(gq + b * lq * d + h * dh, elq, edh, stride).noalias() += dp * kh;
          if (gk) StridedMut(gk + b * lk * d + h * dh, elk, edh, stride).noalias() += dp.transpose() * qh;
        }
      }
    };
  }
  return r;
}

}  // namespace hstg::num
