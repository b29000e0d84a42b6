#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "hstg/numerics/adam.hpp"
#include "hstg/pretrain/backbone.hpp"

namespace hstg::ssl {

/// Which positions the reconstruction loss reads.
enum class LossPositions { kMasked, kUnmasked };

/// Two reconstruction heads on top of h_s: cell logits and (lon, lat).
struct SslHeads {
  num::Linear grid;
  num::Linear tuple;

  SslHeads() = default;
  SslHeads(num::ParamStore& store, const ModelConfig& cfg)
      : grid(store, "ssl_head.grid", cfg.d_model, cfg.n_cells), tuple(store, "ssl_head.tuple", cfg.d_model, 2) {}
};

struct SslOutput {
  Tensor grid_logits;  // [B, L, n_cells]
  Tensor tuple_pred;   // [B, L, 2]
  Tensor hidden;       // h_s [B, L, D]
};

inline SslOutput ssl_forward(const HierarchicalEncoder& enc, const SslHeads& heads, const TokenBatch& batch, const std::vector<MaskingPlan>& plans) {
  Tensor hs = enc.encode(batch, &plans);
  return {heads.grid(hs), heads.tuple(hs), hs};
}

/// Reconstruction targets gathered at the loss positions. `rows` index the
/// flattened [B * L] outputs; `groups` partition 0..rows.size() by trajectory.
struct SslTargets {
  std::vector<std::size_t> rows;
  std::vector<int> cells;
  std::vector<double> tuples;
  std::vector<std::vector<std::size_t>> groups;
};

inline SslTargets make_ssl_targets(const TokenBatch& batch, const std::vector<MaskingPlan>& plans, LossPositions which = LossPositions::kMasked) {
  SslTargets t;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    std::vector<std::size_t> group;
    for (std::size_t pos = 0; pos < batch.lengths[b]; ++pos) {
      const bool masked = plans[b].is_masked(pos);
      if (masked != (which == LossPositions::kMasked)) continue;
      const std::size_t row = b * batch.len + pos;
      group.push_back(t.rows.size());
      t.rows.push_back(row);
      t.cells.push_back(static_cast<int>(batch.cells[row]));
      t.tuples.push_back(batch.coords[row * 2]);
      t.tuples.push_back(batch.coords[row * 2 + 1]);
    }
    if (!group.empty()) t.groups.push_back(std::move(group));
  }
  return t;
}

struct SslLoss {
  Tensor total;
  Tensor grid_ce;     // summed cross-entropy over target rows
  Tensor tuple_rmse;  // sum over trajectories of per-trajectory RMSE
};

/// k * CE(grid) + (1 - k) * sum_u RMSE_u(tuple).
inline SslLoss ssl_loss(const Tensor& grid_logits, const Tensor& tuple_pred, const SslTargets& targets, double k) {
  if (!(k >= 0.0 && k <= 1.0)) throw ValidationError("ssl_loss: k must lie in [0, 1]");
  if (targets.rows.empty()) throw ValidationError("ssl_loss: no masked positions");
  Tensor ce = num::cross_entropy(num::take_rows(grid_logits, targets.rows), targets.cells);
  Tensor rmse = num::grouped_rmse_sum(num::take_rows(tuple_pred, targets.rows), targets.tuples, targets.groups);
  return {num::add(num::scale(ce, k), num::scale(rmse, 1.0 - k)), ce, rmse};
}

struct PretrainOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 42;
  LossPositions loss_positions = LossPositions::kMasked;
  double early_stop_tol = 1e-3;
  std::size_t early_stop_patience = 3;
};

struct PretrainEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  double grid_ce = 0.0;
  double tuple_rmse = 0.0;
  double masked_accuracy = 0.0;  // on held-out masked positions
};

/// Deterministic masking plan for sequence `index` in `epoch`.
inline MaskingPlan plan_for(const ModelConfig& cfg, std::size_t length, std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  return mask_spans(length, cfg.mask_rate, cfg.mean_span, num::mix_seed(num::mix_seed(seed, epoch), index), cfg.n_cells);
}

/// Top-1 accuracy of the grid head on masked positions of `data`, with plans
/// fixed by `seed` so repeated evaluations see the same masks.
inline double masked_grid_accuracy(const HierarchicalEncoder& enc, const SslHeads& heads, const std::vector<SequenceExample>& data,
                                   std::uint64_t seed, std::size_t batch_size = 64) {
  num::NoGradGuard guard;
  const ModelConfig& cfg = enc.config();
  std::size_t hits = 0;
  std::size_t total = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<const SequenceExample*> exs;
    std::vector<MaskingPlan> plans;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) {
      exs.push_back(&data[i]);
      plans.push_back(plan_for(cfg, data[i].length(), seed, 0xACC, i));
    }
    TokenBatch batch = make_batch(exs, enc.sentinel_row());
    SslOutput out = ssl_forward(enc, heads, batch, plans);
    SslTargets t = make_ssl_targets(batch, plans);
    const std::size_t v = cfg.n_cells;
    auto logits = out.grid_logits.values();
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const double* row = logits.data() + t.rows[r] * v;
      const auto best = static_cast<int>(std::max_element(row, row + v) - row);
      hits += best == t.cells[r] ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

/// Accuracy of always predicting the most frequent training cell, measured
/// on the same held-out masked positions as masked_grid_accuracy.
inline double majority_cell_accuracy(const ModelConfig& cfg, const std::vector<SequenceExample>& train, const std::vector<SequenceExample>& heldout,
                                     std::uint64_t seed) {
  std::vector<std::size_t> freq(cfg.n_cells, 0);
  for (const auto& ex : train)
    for (std::size_t c : ex.cells) ++freq[c];
  const auto majority = static_cast<std::size_t>(std::max_element(freq.begin(), freq.end()) - freq.begin());
  std::size_t hits = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    const MaskingPlan plan = plan_for(cfg, heldout[i].length(), seed, 0xACC, i);
    for (std::size_t p = 0; p < heldout[i].length(); ++p) {
      if (!plan.is_masked(p)) continue;
      hits += heldout[i].cells[p] == majority ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

/// Adam-trains encoder and heads on span-masked reconstruction. Stops early
/// once the relative epoch-loss change stays below `early_stop_tol` for
/// `early_stop_patience` consecutive epochs. Gradients are scaled by
/// 1 / batch size; reported losses use the summed form.
inline std::vector<PretrainEpoch> pretrain_loop(const HierarchicalEncoder& enc, const SslHeads& heads, num::ParamStore& store,
                                                const std::vector<SequenceExample>& train, const std::vector<SequenceExample>& heldout,
                                                const PretrainOptions& opts,
                                                const std::function<void(const PretrainEpoch&)>& on_epoch = {}) {
  if (train.empty()) throw ValidationError("pretrain_loop: empty training set");
  const ModelConfig& cfg = enc.config();
  const double k = cfg.use_tuple_channel ? cfg.k_balance : 1.0;
  std::vector<Tensor> params = store.tensors();
  num::AdamState adam(num::AdamOptions{opts.lr});
  std::vector<PretrainEpoch> history;
  std::size_t calm_epochs = 0;
  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    PretrainEpoch rec;
    rec.epoch = epoch;
    num::Rng rng = num::make_rng(opts.seed, 0xE0000 + epoch);
    for (const auto& idx : bucketed_batches(train, opts.batch_size, rng)) {
      std::vector<const SequenceExample*> exs;
      std::vector<MaskingPlan> plans;
      for (std::size_t i : idx) {
        exs.push_back(&train[i]);
        plans.push_back(plan_for(cfg, train[i].length(), opts.seed, epoch, i));
      }
      TokenBatch batch = make_batch(exs, enc.sentinel_row());
      SslTargets targets = make_ssl_targets(batch, plans, opts.loss_positions);
      if (targets.rows.empty()) continue;
      SslOutput out = ssl_forward(enc, heads, batch, plans);
      SslLoss loss = ssl_loss(out.grid_logits, out.tuple_pred, targets, k);
      if (!std::isfinite(loss.total.item())) throw TrainingError("pretraining diverged at epoch " + std::to_string(epoch));
      store.zero_grad();
      loss.total.backward();
      num::adam_step(params, adam, 1.0 / static_cast<double>(exs.size()));
      rec.loss += loss.total.item();
      rec.grid_ce += loss.grid_ce.item();
      rec.tuple_rmse += loss.tuple_rmse.item();
    }
    store.zero_grad();
    if (!std::isfinite(rec.loss)) throw TrainingError("pretraining diverged at epoch " + std::to_string(epoch));
    rec.masked_accuracy = heldout.empty() ? 0.0 : masked_grid_accuracy(enc, heads, heldout, opts.seed);
    if (!history.empty()) {
      const double prev = history.back().loss;
      const double rel = std::abs(rec.loss - prev) / std::max(std::abs(prev), 1e-12);
      calm_epochs = rel < opts.early_stop_tol ? calm_epochs + 1 : 0;
    }
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (calm_epochs >= opts.early_stop_patience) break;
  }
  return history;
}

}  // namespace hstg::ssl
