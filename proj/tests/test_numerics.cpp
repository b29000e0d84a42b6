#include <bit>
#include <cmath>
#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "hstg/numerics/adam.hpp"
#include "hstg/numerics/attention.hpp"
#include "hstg/numerics/checkpoint.hpp"
#include "hstg/numerics/grad_check.hpp"
#include "hstg/numerics/layers.hpp"
#include "test_util.hpp"

namespace {

using namespace hstg;
using namespace hstg::num;
using hstg::testing::random_tensor;
using hstg::testing::weighted_sum;

constexpr double kGradTol = 1e-6;

TEST(Matmul, MatchesTripleLoop) {
  Rng rng = make_rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + uniform_index(rng, 7);
    const std::size_t k = 1 + uniform_index(rng, 7);
    const std::size_t n = 1 + uniform_index(rng, 7);
    Tensor a = random_tensor(rng, {m, k});
    Tensor b = random_tensor(rng, {k, n});
    Tensor c = matmul(a, b);
    ASSERT_EQ(c.shape(), (Shape{m, n}));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double ref = 0.0;
        for (std::size_t p = 0; p < k; ++p) ref += a.at(i * k + p) * b.at(p * n + j);
        EXPECT_NEAR(c.at(i * n + j), ref, 1e-12);
      }
  }
}

TEST(Matmul, RejectsMismatchedInner) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), DimensionError);
}

TEST(GradCheck, ElementwiseOps) {
  Rng rng = make_rng(2);
  Tensor a = random_tensor(rng, {3, 4});
  Tensor b = random_tensor(rng, {3, 4});
  Tensor w = random_tensor(rng, {3, 4});
  EXPECT_LT(grad_check([&] { return weighted_sum(add(a, b), w); }, {a, b}), kGradTol);
  EXPECT_LT(grad_check([&] { return weighted_sum(sub(a, b), w); }, {a, b}), kGradTol);
  EXPECT_LT(grad_check([&] { return weighted_sum(mul(a, b), w); }, {a, b}), kGradTol);
  EXPECT_LT(grad_check([&] { return weighted_sum(scale(a, -2.5), w); }, {a}), kGradTol);
  EXPECT_LT(grad_check([&] { return weighted_sum(row_scale(a, {0.5, -1.0, 3.0}), w); }, {a}), kGradTol);
  EXPECT_LT(grad_check([&] { return weighted_sum(gelu(a), w); }, {a}), kGradTol);
  EXPECT_LT(grad_check([&] { return weighted_sum(reshape(reshape(a, {12}), {3, 4}), w); }, {a}), kGradTol);
}

TEST(GradCheck, LinearAndMatmul) {
  Rng rng = make_rng(3);
  Tensor x = random_tensor(rng, {2, 3, 4});
  Tensor wt = random_tensor(rng, {4, 5});
  Tensor bias = random_tensor(rng, {5});
  Tensor w = random_tensor(rng, {2, 3, 5});
  EXPECT_LT(grad_check([&] { return weighted_sum(linear(x, wt, bias), w); }, {x, wt, bias}), kGradTol);
  Tensor a = random_tensor(rng, {3, 4});
  Tensor w2 = random_tensor(rng, {3, 5});
  EXPECT_LT(grad_check([&] { return weighted_sum(matmul(a, wt), w2); }, {a, wt}), kGradTol);
}

TEST(GradCheck, IndexingOps) {
  Rng rng = make_rng(4);
  Tensor table = random_tensor(rng, {5, 3});
  Tensor w = random_tensor(rng, {2, 3, 3});
  EXPECT_LT(grad_check([&] { return weighted_sum(gather_rows(table, {0, 4, 4, 2, 1, 0}, {2, 3}), w); }, {table}), kGradTol);
  Tensor w4 = random_tensor(rng, {4, 3});
  EXPECT_LT(grad_check([&] { return weighted_sum(take_rows(table, {3, 3, 0, 1}), w4); }, {table}), kGradTol);
  EXPECT_LT(grad_check([&] { return weighted_sum(blend_rows(table, {0, 1, 2, 4}, {0.2, 0.5, 1.0, 0.0}, {1, 1, 3, 0}, {0.8, 0.5, 0.0, 1.0}), w4); }, {table}),
            kGradTol);
  Tensor other = random_tensor(rng, {5, 2});
  Tensor w5 = random_tensor(rng, {5, 5});
  EXPECT_LT(grad_check([&] { return weighted_sum(concat_last({table, other}), w5); }, {table, other}), kGradTol);
  Tensor top = random_tensor(rng, {2, 3});
  Tensor w7 = random_tensor(rng, {7, 3});
  EXPECT_LT(grad_check([&] { return weighted_sum(concat_rows({table, top}), w7); }, {table, top}), kGradTol);
}

TEST(GradCheck, NormalizationAndLosses) {
  Rng rng = make_rng(5);
  Tensor x = random_tensor(rng, {4, 6});
  Tensor gain = random_tensor(rng, {6}, 0.5, 1.5);
  Tensor shift = random_tensor(rng, {6});
  Tensor w = random_tensor(rng, {4, 6});
  EXPECT_LT(grad_check([&] { return weighted_sum(layer_norm(x, gain, shift), w); }, {x, gain, shift}), kGradTol);
  Tensor x3 = random_tensor(rng, {2, 3, 4});
  Tensor w3 = random_tensor(rng, {2, 3, 4});
  EXPECT_LT(grad_check([&] { return weighted_sum(softmax(x3, 1), w3); }, {x3}), kGradTol);
  EXPECT_LT(grad_check([&] { return weighted_sum(softmax(x3, 2), w3); }, {x3}), kGradTol);
  EXPECT_LT(grad_check([&] { return cross_entropy(x, {0, kIgnoreIndex, 5, 2}); }, {x}), kGradTol);
  Tensor pred = random_tensor(rng, {5, 2});
  std::vector<double> target(10);
  for (double& t : target) t = uniform(rng, -1, 1);
  EXPECT_LT(grad_check([&] { return grouped_rmse_sum(pred, target, {{0, 1}, {2}, {3, 4}}); }, {pred}), kGradTol);
}

TEST(GradCheck, AttentionWithMasks) {
  Rng rng = make_rng(6);
  Tensor q = random_tensor(rng, {2, 4, 6});
  Tensor k = random_tensor(rng, {2, 4, 6});
  Tensor v = random_tensor(rng, {2, 4, 6});
  Tensor w = random_tensor(rng, {2, 4, 6});
  AttentionMask mask{{1, 1, 0, 1, 1, 1, 1, 0}, true};
  EXPECT_LT(grad_check([&] { return weighted_sum(multi_head_attention(q, k, v, 2, mask), w); }, {q, k, v}), kGradTol);
  Tensor kc = random_tensor(rng, {2, 3, 6});
  Tensor vc = random_tensor(rng, {2, 3, 6});
  AttentionMask cross{{1, 0, 1, 1, 1, 1}, false};
  EXPECT_LT(grad_check([&] { return weighted_sum(multi_head_attention(q, kc, vc, 3, cross), w); }, {q, kc, vc}), kGradTol);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng = make_rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor(rng, {3, 1 + uniform_index(rng, 9)}, -30.0, 30.0);
    Tensor p = softmax(x, 1);
    const std::size_t n = x.dim(1);
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_GE(p.at(i * n + j), 0.0);
        s += p.at(i * n + j);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(CrossEntropy, UniformLogitsGiveLogClassCount) {
  Tensor logits = Tensor::full({3, 4}, 0.7);
  EXPECT_NEAR(cross_entropy(logits, {0, 1, 3}).item(), 3.0 * std::log(4.0), 1e-12);
  EXPECT_NEAR(cross_entropy(logits, {2, kIgnoreIndex, kIgnoreIndex}).item(), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, RejectsOutOfRangeTarget) {
  EXPECT_THROW(cross_entropy(Tensor::zeros({2, 3}), {0, 3}), IndexError);
}

TEST(Attention, MaskedKeysGetZeroProbability) {
  Rng rng = make_rng(8);
  Tensor q = random_tensor(rng, {2, 5, 4});
  Tensor k = random_tensor(rng, {2, 5, 4});
  AttentionMask mask{{1, 1, 1, 0, 0, 1, 0, 1, 1, 1}, true};
  AttentionProbe probe;
  multi_head_attention(q, k, k, 2, mask);
  ASSERT_EQ(probe.records.size(), 4u);
  for (std::size_t r = 0; r < probe.records.size(); ++r) {
    const auto& rec = probe.records[r];
    const std::size_t b = r / 2;
    for (std::size_t i = 0; i < rec.rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < rec.cols; ++j) {
        const bool visible = j <= i && mask.key_valid[b * 5 + j] != 0;
        EXPECT_EQ(rec.allowed[i * rec.cols + j], visible ? 1 : 0);
        if (!visible) {
          EXPECT_EQ(rec.probs[i * rec.cols + j], 0.0);
        }
        s += rec.probs[i * rec.cols + j];
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Attention, CausalOutputIgnoresLaterPositions) {
  Rng rng = make_rng(9);
  Tensor q = random_tensor(rng, {1, 6, 4});
  Tensor k = random_tensor(rng, {1, 6, 4});
  Tensor v = random_tensor(rng, {1, 6, 4});
  Tensor base = multi_head_attention(q, k, v, 2, {{}, true});
  // Perturb the last key/value: every earlier query row must stay bit-identical.
  Tensor k2 = k.clone();
  Tensor v2 = v.clone();
  for (std::size_t j = 0; j < 4; ++j) {
    k2.mutable_values()[20 + j] += 3.0;
    v2.mutable_values()[20 + j] -= 2.0;
  }
  Tensor moved = multi_head_attention(q, k2, v2, 2, {{}, true});
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(base.at(i), moved.at(i));
  bool last_changed = false;
  for (std::size_t i = 20; i < 24; ++i) last_changed = last_changed || base.at(i) != moved.at(i);
  EXPECT_TRUE(last_changed);
}

TEST(Attention, MatchesSingleHeadReference) {
  Rng rng = make_rng(10);
  Tensor q = random_tensor(rng, {1, 3, 2});
  Tensor k = random_tensor(rng, {1, 4, 2});
  Tensor v = random_tensor(rng, {1, 4, 2});
  Tensor out = multi_head_attention(q, k, v, 1);
  for (std::size_t i = 0; i < 3; ++i) {
    double s[4];
    double z = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      s[j] = std::exp((q.at(i * 2) * k.at(j * 2) + q.at(i * 2 + 1) * k.at(j * 2 + 1)) / std::sqrt(2.0));
      z += s[j];
    }
    for (std::size_t c = 0; c < 2; ++c) {
      double ref = 0.0;
      for (std::size_t j = 0; j < 4; ++j) ref += s[j] / z * v.at(j * 2 + c);
      EXPECT_NEAR(out.at(i * 2 + c), ref, 1e-12);
    }
  }
}

TEST(Adam, MatchesReferenceTrace) {
  AdamOptions o{0.01, 0.9, 0.999, 1e-8};
  AdamState state(o);
  std::vector<Tensor> params{Tensor({2}, {1.0, -0.5}, true)};
  const double grads[3][2] = {{0.5, -1.0}, {0.1, 2.0}, {-0.3, 0.0}};
  double p[2] = {1.0, -0.5};
  double m[2] = {0, 0};
  double v[2] = {0, 0};
  for (int t = 1; t <= 3; ++t) {
    params[0].zero_grad();
    auto g = params[0].mutable_grad();
    g[0] = grads[t - 1][0];
    g[1] = grads[t - 1][1];
    adam_step(params, state);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[t - 1][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[t - 1][i] * grads[t - 1][i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      p[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(params[0].at(static_cast<std::size_t>(i)), p[i], 1e-15);
    }
  }
  EXPECT_EQ(state.step, 3u);
}

TEST(Adam, FrozenParametersStayPut) {
  AdamState state;
  std::vector<Tensor> params{Tensor({1}, {1.0}, true), Tensor({1}, {2.0}, true)};
  params[0].mutable_grad()[0] = 1.0;
  params[1].mutable_grad()[0] = 1.0;
  const std::vector<bool> frozen{true, false};
  adam_step(params, state, 1.0, &frozen);
  EXPECT_EQ(params[0].at(0), 1.0);
  EXPECT_NE(params[1].at(0), 2.0);
}

TEST(Adam, RejectsNonFiniteGradient) {
  AdamState state;
  std::vector<Tensor> params{Tensor({1}, {1.0}, true)};
  params[0].mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(adam_step(params, state), NumericError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng = make_rng(11);
  NamedTensors saved{{"a", random_tensor(rng, {3, 4}, -1e300, 1e300)},
                     {"b.c", Tensor({1}, {std::nextafter(1.0, 2.0)})},
                     {"d", random_tensor(rng, {2, 1, 5}, -1e-300, 1e-300)}};
  const auto path = std::filesystem::temp_directory_path() / "hstg_roundtrip.ckpt";
  save_checkpoint(path, saved);
  NamedTensors loaded = load_checkpoint(path);
  ASSERT_EQ(loaded.size(), saved.size());
  for (std::size_t i = 0; i < saved.size(); ++i) {
    EXPECT_EQ(loaded[i].first, saved[i].first);
    EXPECT_EQ(loaded[i].second.shape(), saved[i].second.shape());
    for (std::size_t j = 0; j < saved[i].second.size(); ++j)
      EXPECT_EQ(std::bit_cast<std::uint64_t>(loaded[i].second.at(j)), std::bit_cast<std::uint64_t>(saved[i].second.at(j)));
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, TruncatedFileIsRejected) {
  const auto path = std::filesystem::temp_directory_path() / "hstg_truncated.ckpt";
  save_checkpoint(path, {{"w", Tensor::full({4, 4}, 1.5)}});
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 9);
  EXPECT_THROW(load_checkpoint(path), ValidationError);
  std::filesystem::remove(path);
}

TEST(ParamStore, AssignFromCopiesMatchingNames) {
  ParamStore a(1);
  a.create("x.w", {2, 2}, Init::kXavier);
  a.create("y.w", {3}, Init::kNormal, 1.0);
  ParamStore b(2);
  Tensor bx = b.create("x.w", {2, 2}, Init::kZeros);
  EXPECT_EQ(b.assign_from(a.entries()), 1u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(bx.at(i), a.get("x.w").at(i));
}

TEST(Autodiff, NoGradSkipsTheTape) {
  Tensor a({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    Tensor r = mul(a, a);
    EXPECT_FALSE(r.requires_grad());
  }
  EXPECT_TRUE(mul(a, a).requires_grad());
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  Tensor a({1}, {3.0}, true);
  Tensor b = mul(a, a);
  Tensor r = sum(add(b, mul(b, a)));  // a^2 + a^3
  r.backward();
  EXPECT_NEAR(a.grad()[0], 2 * 3.0 + 3 * 9.0, 1e-12);
}

TEST(Autodiff, NonFiniteResultFailsFast) {
  Tensor a({2}, {1.0, 1e308});
  EXPECT_THROW(scale(a, 1e10), NumericError);
  EXPECT_THROW(Tensor({2}, {1.0}), DimensionError);
}

TEST(Layers, EncoderGradCheck) {
  ParamStore store(12);
  Encoder enc(store, "enc", 1, 4, 2, 6);
  Rng rng = make_rng(13);
  Tensor x = random_tensor(rng, {2, 3, 4});
  Tensor w = random_tensor(rng, {2, 3, 4});
  AttentionMask mask{{1, 1, 1, 1, 1, 0}, false};
  std::vector<Tensor> params = store.tensors();
  params.push_back(x);
  EXPECT_LT(grad_check([&] { return weighted_sum(enc(x, mask), w); }, params), 1e-5);
}

TEST(Layers, SinusoidalPositionsFollowTheFormula) {
  Tensor pe = sinusoidal_positions(1, 5, 6);
  for (std::size_t pos = 0; pos < 5; ++pos)
    for (std::size_t i = 0; i < 3; ++i) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, 2.0 * static_cast<double>(i) / 6.0);
      EXPECT_NEAR(pe.at(pos * 6 + 2 * i), std::sin(angle), 1e-12);
      EXPECT_NEAR(pe.at(pos * 6 + 2 * i + 1), std::cos(angle), 1e-12);
    }
}

}  // namespace
