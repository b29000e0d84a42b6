#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hstg/numerics/attention.hpp"
#include "hstg/numerics/ops.hpp"
#include "hstg/numerics/param_store.hpp"

namespace hstg::num {

struct Linear {
  Tensor weight;
  Tensor bias;  // may be undefined

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, bool with_bias = true)
      : weight(store.create(name + ".w", {in, out}, Init::kXavier)),
        bias(with_bias ? store.create(name + ".b", {out}, Init::kZeros) : Tensor()) {}

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct LayerNorm {
  Tensor gain;
  Tensor shift;

  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, std::size_t d)
      : gain(store.create(name + ".g", {d}, Init::kOnes)), shift(store.create(name + ".b", {d}, Init::kZeros)) {}

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, shift); }
};

struct FeedForward {
  Linear in;
  Linear out;

  FeedForward() = default;
  FeedForward(ParamStore& store, const std::string& name, std::size_t d, std::size_t hidden)
      : in(store, name + ".in", d, hidden), out(store, name + ".out", hidden, d) {}

  Tensor operator()(const Tensor& x) const { return out(gelu(in(x))); }
};

/// Projected multi-head attention: softmax(QK^T / sqrt(d_head)) V, then an
/// output projection.
struct AttentionBlock {
  Linear q;
  Linear k;
  Linear v;
  Linear o;
  std::size_t heads = 1;

  AttentionBlock() = default;
  AttentionBlock(ParamStore& store, const std::string& name, std::size_t d, std::size_t n_heads)
      : q(store, name + ".q", d, d), k(store, name + ".k", d, d), v(store, name + ".v", d, d), o(store, name + ".o", d, d), heads(n_heads) {}

  Tensor operator()(const Tensor& query, const Tensor& memory, const AttentionMask& mask) const {
    return o(multi_head_attention(q(query), k(memory), v(memory), heads, mask));
  }
};

/// Pre-norm encoder layer: x + SelfAttn(LN(x)), then x + FFN(LN(x)).
struct EncoderLayer {
  LayerNorm norm_attn;
  AttentionBlock attn;
  LayerNorm norm_ff;
  FeedForward ff;

  EncoderLayer() = default;
  EncoderLayer(ParamStore& store, const std::string& name, std::size_t d, std::size_t heads, std::size_t hidden)
      : norm_attn(store, name + ".ln1", d), attn(store, name + ".attn", d, heads), norm_ff(store, name + ".ln2", d), ff(store, name + ".ff", d, hidden) {}

  Tensor operator()(const Tensor& x, const AttentionMask& mask) const {
    Tensor n = norm_attn(x);
    Tensor h = add(x, attn(n, n, mask));
    return add(h, ff(norm_ff(h)));
  }
};

/// Pre-norm decoder layer with causal self-attention and cross-attention.
struct DecoderLayer {
  LayerNorm norm_self;
  AttentionBlock self_attn;
  LayerNorm norm_cross;
  AttentionBlock cross_attn;
  LayerNorm norm_ff;
  FeedForward ff;

  DecoderLayer() = default;
  DecoderLayer(ParamStore& store, const std::string& name, std::size_t d, std::size_t heads, std::size_t hidden)
      : norm_self(store, name + ".ln1", d),
        self_attn(store, name + ".self", d, heads),
        norm_cross(store, name + ".ln2", d),
        cross_attn(store, name + ".cross", d, heads),
        norm_ff(store, name + ".ln3", d),
        ff(store, name + ".ff", d, hidden) {}

  Tensor operator()(const Tensor& y, const Tensor& memory, const AttentionMask& self_mask, const AttentionMask& cross_mask) const {
    Tensor n = norm_self(y);
    Tensor h = add(y, self_attn(n, n, self_mask));
    h = add(h, cross_attn(norm_cross(h), memory, cross_mask));
    return add(h, ff(norm_ff(h)));
  }
};

struct Encoder {
  std::vector<EncoderLayer> layers;
  LayerNorm final_norm;

  Encoder() = default;
  Encoder(ParamStore& store, const std::string& name, std::size_t n_layers, std::size_t d, std::size_t heads, std::size_t hidden) {
    for (std::size_t i = 0; i < n_layers; ++i) layers.emplace_back(store, name + ".layer" + std::to_string(i), d, heads, hidden);
    final_norm = LayerNorm(store, name + ".ln_final", d);
  }

  Tensor operator()(Tensor x, const AttentionMask& mask) const {
    for (const auto& layer : layers) x = layer(x, mask);
    return final_norm(x);
  }
};

struct Decoder {
  std::vector<DecoderLayer> layers;
  LayerNorm final_norm;

  Decoder() = default;
  Decoder(ParamStore& store, const std::string& name, std::size_t n_layers, std::size_t d, std::size_t heads, std::size_t hidden) {
    for (std::size_t i = 0; i < n_layers; ++i) layers.emplace_back(store, name + ".layer" + std::to_string(i), d, heads, hidden);
    final_norm = LayerNorm(store, name + ".ln_final", d);
  }

  Tensor operator()(Tensor y, const Tensor& memory, const AttentionMask& self_mask, const AttentionMask& cross_mask) const {
    for (const auto& layer : layers) y = layer(y, memory, self_mask, cross_mask);
    return final_norm(y);
  }
};

/// Fixed sinusoidal position codes, tiled over a batch: shape [batch, len, d].
inline Tensor sinusoidal_positions(std::size_t batch, std::size_t len, std::size_t d) {
  std::vector<double> pe(batch * len * d);
  for (std::size_t pos = 0; pos < len; ++pos)
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double v = (i % 2 == 0) ? std::sin(static_cast<double>(pos) * freq) : std::cos(static_cast<double>(pos) * freq);
      for (std::size_t b = 0; b < batch; ++b) pe[(b * len + pos) * d + i] = v;
    }
  return Tensor({batch, len, d}, std::move(pe));
}

}  // namespace hstg::num
