#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "hstg/numerics/grad_check.hpp"
#include "hstg/pretrain/ssl.hpp"
#include "test_util.hpp"

namespace {

using namespace hstg;
using namespace hstg::ssl;

TEST(Masking, CoversExactlyTheTargetCount) {
  num::Rng rng = num::make_rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t len = 1 + num::uniform_index(rng, 120);
    const double rate = num::uniform(rng, 0.0, 1.0);
    const double span = num::uniform(rng, 1.0, 6.0);
    const MaskingPlan plan = mask_spans(len, rate, span, static_cast<std::uint64_t>(trial));
    const auto target = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(len) - 1e-9));
    EXPECT_EQ(plan.masked_count(), target) << "len " << len << " rate " << rate;
  }
  EXPECT_EQ(mask_spans(20, 0.15, 3.0, 7).masked_count(), 3u);
  EXPECT_EQ(mask_spans(10, 0.0, 3.0, 7).masked_count(), 0u);
  EXPECT_EQ(mask_spans(10, 1.0, 3.0, 7).masked_count(), 10u);
}

TEST(Masking, SpansAreDisjointAndMatchTheMask) {
  num::Rng rng = num::make_rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t len = 1 + num::uniform_index(rng, 80);
    const MaskingPlan plan = mask_spans(len, num::uniform(rng, 0.0, 0.9), num::uniform(rng, 1.0, 5.0), static_cast<std::uint64_t>(trial));
    std::vector<std::uint8_t> rebuilt(len, 0);
    std::size_t prev_end = 0;
    for (const Span& s : plan.spans) {
      EXPECT_GE(s.length, 1u);
      EXPECT_GE(s.start, prev_end) << "overlapping or unsorted spans";
      EXPECT_LE(s.start + s.length, len);
      for (std::size_t i = s.start; i < s.start + s.length; ++i) rebuilt[i] = 1;
      prev_end = s.start + s.length;
    }
    EXPECT_EQ(rebuilt, plan.masked);
  }
}

TEST(Masking, DeterministicInSeed) {
  const MaskingPlan a = mask_spans(50, 0.3, 3.0, 99);
  const MaskingPlan b = mask_spans(50, 0.3, 3.0, 99);
  EXPECT_EQ(a.masked, b.masked);
  bool any_differs = false;
  for (std::uint64_t s = 100; s < 110; ++s) any_differs = any_differs || mask_spans(50, 0.3, 3.0, s).masked != a.masked;
  EXPECT_TRUE(any_differs);
}

TEST(Masking, SpanLengthsAverageTheConfiguredMean) {
  for (double mean : {1.0, 2.0, 3.0, 5.0}) {
    double total = 0.0;
    std::size_t spans = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const MaskingPlan plan = mask_spans(20000, 0.05, mean, seed);
      for (const Span& s : plan.spans) {
        total += static_cast<double>(s.length);
        ++spans;
      }
    }
    EXPECT_NEAR(total / static_cast<double>(spans), mean, 0.05 * mean + 0.02) << "mean span " << mean;
  }
}

TEST(Masking, RejectsBadArguments) {
  EXPECT_THROW(mask_spans(0, 0.1, 3.0, 1), ValidationError);
  EXPECT_THROW(mask_spans(5, 1.5, 3.0, 1), ValidationError);
  EXPECT_THROW(mask_spans(5, 0.1, 0.5, 1), ValidationError);
}

/// Four-cell world small enough for finite differences.
class MicroModel : public ::testing::Test {
 protected:
  void SetUp() override {
    grid = geo::GridSpec::from_meters({116.3, 39.9, 0.0}, 200.0, 200.0, 100.0);
    graph = ata::build_ata_graph(grid, {}, 150.0);
    graph.counts = {3, 1, 0, 2};
    ata::assign_gamma(graph);
    cfg.d_model = 4;
    cfg.n_heads = 2;
    cfg.encoder_layers = 1;
    cfg.decoder_layers = 1;
    cfg.d_ff = 6;
    cfg.d_transfer = 4;
    cfg.n_slots = 4;
    cfg.n_cells = 4;
    cfg.mask_rate = 0.4;
    cfg.mean_span = 2.0;
    num::Rng rng = num::make_rng(3);
    for (std::size_t k = 0; k < 6; ++k) {
      SequenceExample ex;
      ex.id = "ex" + std::to_string(k);
      const std::size_t len = 3 + k % 3;
      for (std::size_t i = 0; i < len; ++i) {
        ex.cells.push_back((k + i) % 4);
        ex.coords.push_back(num::uniform(rng, -1, 1));
        ex.coords.push_back(num::uniform(rng, -1, 1));
        ex.distance.push_back(10.0 * static_cast<double>(i));
        ex.time.push_back(5.0 * static_cast<double>(i));
        ex.road_class.push_back(static_cast<int>(i % 2));
      }
      data.push_back(ex);
    }
  }

  std::vector<const SequenceExample*> pointers(std::size_t n) const {
    std::vector<const SequenceExample*> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(&data[i]);
    return out;
  }

  geo::GridSpec grid;
  ata::AtaGraph graph;
  ModelConfig cfg;
  std::vector<SequenceExample> data;
};

TEST_F(MicroModel, BatchPadsWithSentinelAndZeroCoordinates) {
  const TokenBatch b = make_batch(pointers(3), 4);
  EXPECT_EQ(b.len, 5u);
  EXPECT_EQ(b.lengths, (std::vector<std::size_t>{3, 4, 5}));
  EXPECT_EQ(b.cells[3], 4u);
  EXPECT_EQ(b.coords[3 * 2], 0.0);
  EXPECT_EQ(b.valid[3], 0);
  EXPECT_EQ(b.valid[2], 1);
  EXPECT_THROW(make_batch({}, 4), ValidationError);
}

TEST_F(MicroModel, BucketedBatchesPartitionTheData) {
  num::Rng rng = num::make_rng(4);
  const auto batches = bucketed_batches(data, 4, rng, 2);
  std::multiset<std::size_t> seen;
  for (const auto& b : batches) {
    EXPECT_LE(b.size(), 4u);
    seen.insert(b.begin(), b.end());
  }
  EXPECT_EQ(seen, (std::multiset<std::size_t>{0, 1, 2, 3, 4, 5}));
}

TEST_F(MicroModel, EveryMaskedTokenSharesOneSentinelEmbedding) {
  num::ParamStore store(5);
  HierarchicalEncoder enc(store, cfg, graph);
  const TokenBatch batch = make_batch(pointers(3), enc.sentinel_row());
  std::vector<MaskingPlan> plans;
  for (std::size_t i = 0; i < 3; ++i) plans.push_back(mask_spans(batch.lengths[i], 0.5, 1.0, 10 + i, cfg.n_cells));
  const num::Tensor emb = enc.embed_tokens(batch, &plans, enc.cell_embeddings(), false);
  const std::size_t d = cfg.d_model;
  std::vector<double> first;
  std::size_t masked = 0;
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t p = 0; p < batch.lengths[b]; ++p) {
      if (!plans[b].is_masked(p)) continue;
      ++masked;
      std::vector<double> row(emb.values().begin() + static_cast<std::ptrdiff_t>((b * batch.len + p) * d),
                              emb.values().begin() + static_cast<std::ptrdiff_t>((b * batch.len + p + 1) * d));
      if (first.empty()) first = row;
      // Same inputs; only GEMM blocking may differ in the last bits.
      for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(row[k], first[k], 1e-13);
    }
  EXPECT_GE(masked, 3u);
  for (const auto& plan : plans) {
    EXPECT_EQ(plan.sentinel_cell_id, cfg.n_cells);
    EXPECT_EQ(plan.sentinel_tuple[0], 0.0);
  }
}

TEST_F(MicroModel, TargetsCoverMaskedOrUnmaskedPositions) {
  const TokenBatch batch = make_batch(pointers(2), cfg.n_cells);
  std::vector<MaskingPlan> plans{mask_spans(3, 0.4, 1.0, 1, 4), mask_spans(4, 0.4, 1.0, 2, 4)};
  const SslTargets masked = make_ssl_targets(batch, plans, LossPositions::kMasked);
  const SslTargets unmasked = make_ssl_targets(batch, plans, LossPositions::kUnmasked);
  EXPECT_EQ(masked.rows.size(), plans[0].masked_count() + plans[1].masked_count());
  EXPECT_EQ(masked.rows.size() + unmasked.rows.size(), 7u);
  EXPECT_EQ(masked.groups.size(), 2u);
  for (std::size_t r = 0; r < masked.rows.size(); ++r) {
    const std::size_t row = masked.rows[r];
    EXPECT_TRUE(plans[row / batch.len].is_masked(row % batch.len));
    EXPECT_EQ(masked.cells[r], static_cast<int>(data[row / batch.len].cells[row % batch.len]));
  }
}

TEST(SslLossTest, MatchesHandComputedValue) {
  // Two trajectories, three target rows, two classes.
  num::Tensor logits({3, 2}, {1.0, 0.0, 0.0, 2.0, 0.5, 0.5});
  num::Tensor pred({3, 2}, {0.0, 0.0, 1.0, 1.0, 3.0, 0.0});
  SslTargets t{{0, 1, 2}, {0, 1, 0}, {0.0, 1.0, 1.0, 1.0, 0.0, 4.0}, {{0, 1}, {2}}};
  const double ce = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)) - std::log(std::exp(2.0) / (std::exp(2.0) + 1.0)) + std::log(2.0);
  const double rmse = std::sqrt((1.0 + 0.0) / 2.0) + std::sqrt((9.0 + 16.0) / 1.0);
  const SslLoss l = ssl_loss(logits, pred, t, 0.3);
  EXPECT_NEAR(l.grid_ce.item(), ce, 1e-12);
  EXPECT_NEAR(l.tuple_rmse.item(), rmse, 1e-12);
  EXPECT_NEAR(l.total.item(), 0.3 * ce + 0.7 * rmse, 1e-12);
  EXPECT_NEAR(ssl_loss(logits, pred, t, 1.0).total.item(), ce, 1e-12);
  EXPECT_NEAR(ssl_loss(logits, pred, t, 0.0).total.item(), rmse, 1e-12);
  EXPECT_THROW(ssl_loss(logits, pred, t, 1.5), ValidationError);
  EXPECT_THROW(ssl_loss(logits, pred, SslTargets{}, 0.5), ValidationError);
}

TEST_F(MicroModel, JointLossGradientMatchesFiniteDifferences) {
  num::ParamStore store(6);
  HierarchicalEncoder enc(store, cfg, graph);
  SslHeads heads(store, cfg);
  const TokenBatch batch = make_batch(pointers(3), enc.sentinel_row());
  std::vector<MaskingPlan> plans;
  for (std::size_t i = 0; i < 3; ++i) plans.push_back(plan_for(cfg, batch.lengths[i], 7, 1, i));
  const SslTargets targets = make_ssl_targets(batch, plans);
  const double err = num::grad_check(
      [&] {
        const SslOutput out = ssl_forward(enc, heads, batch, plans);
        return ssl_loss(out.grid_logits, out.tuple_pred, targets, 0.5).total;
      },
      store.tensors());
  EXPECT_LT(err, 1e-5);
}

TEST_F(MicroModel, PretrainingReducesTheLoss) {
  num::ParamStore store(8);
  HierarchicalEncoder enc(store, cfg, graph);
  SslHeads heads(store, cfg);
  // Loss over every example under masks no training epoch uses.
  auto fixed_loss = [&] {
    num::NoGradGuard guard;
    const TokenBatch batch = make_batch(pointers(data.size()), enc.sentinel_row());
    std::vector<MaskingPlan> plans;
    for (std::size_t i = 0; i < data.size(); ++i) plans.push_back(plan_for(cfg, data[i].length(), 8, 999, i));
    const SslOutput out = ssl_forward(enc, heads, batch, plans);
    return ssl_loss(out.grid_logits, out.tuple_pred, make_ssl_targets(batch, plans), cfg.k_balance).total.item();
  };
  const double before = fixed_loss();
  PretrainOptions opts;
  opts.epochs = 40;
  opts.batch_size = 3;
  opts.lr = 5e-3;
  opts.early_stop_patience = 100;
  std::size_t calls = 0;
  const auto history = pretrain_loop(enc, heads, store, data, data, opts, [&](const PretrainEpoch&) { ++calls; });
  ASSERT_EQ(history.size(), 40u);
  EXPECT_EQ(calls, 40u);
  EXPECT_LT(fixed_loss(), 0.8 * before);
  EXPECT_GE(history.back().masked_accuracy, 0.0);
  EXPECT_LE(history.back().masked_accuracy, 1.0);
}

TEST_F(MicroModel, EarlyStopHonoursPatience) {
  num::ParamStore store(9);
  HierarchicalEncoder enc(store, cfg, graph);
  SslHeads heads(store, cfg);
  PretrainOptions opts;
  opts.epochs = 50;
  opts.batch_size = 6;
  opts.early_stop_tol = 10.0;  // every epoch after the first counts as calm
  opts.early_stop_patience = 2;
  EXPECT_EQ(pretrain_loop(enc, heads, store, data, {}, opts).size(), 3u);
}

TEST_F(MicroModel, MajorityBaselineMatchesDirectCount) {
  std::vector<std::size_t> freq(4, 0);
  for (const auto& ex : data)
    for (std::size_t c : ex.cells) ++freq[c];
  const auto majority = static_cast<std::size_t>(std::max_element(freq.begin(), freq.end()) - freq.begin());
  std::size_t hits = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const MaskingPlan plan = plan_for(cfg, data[i].length(), 11, 0xACC, i);
    for (std::size_t p = 0; p < data[i].length(); ++p)
      if (plan.is_masked(p)) {
        ++total;
        hits += data[i].cells[p] == majority ? 1 : 0;
      }
  }
  EXPECT_DOUBLE_EQ(majority_cell_accuracy(cfg, data, data, 11), static_cast<double>(hits) / static_cast<double>(total));
}

TEST_F(MicroModel, TupleChannelSwitchZeroesCoordinates) {
  ModelConfig off = cfg;
  off.use_tuple_channel = false;
  num::ParamStore store(9);
  HierarchicalEncoder enc(store, off, graph);
  const TokenBatch batch = make_batch(pointers(2), enc.sentinel_row());
  TokenBatch moved = batch;
  for (double& c : moved.coords) c += 5.0;
  const num::Tensor a = enc.encode(batch);
  const num::Tensor b = enc.encode(moved);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.at(i), b.at(i));
}

}  // namespace
