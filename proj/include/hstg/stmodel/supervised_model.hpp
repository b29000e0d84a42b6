#pragma once

#include <cmath>
#include <algorithm>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "hstg/numerics/adam.hpp"
#include "hstg/pretrain/backbone.hpp"
#include "hstg/stmodel/road_vocab.hpp"
#include "hstg/stmodel/st_factor.hpp"

namespace hstg::st {

using ssl::HierarchicalEncoder;

inline const std::string kSupervisedPrefix = "sup.";

/// Largest distance / time offsets seen in training; they fix the slot ranges.
struct IntervalRange {
  double max_distance = 1.0;
  double max_time = 1.0;
};

inline IntervalRange interval_range(const std::vector<SequenceExample>& data) {
  IntervalRange r{0.0, 0.0};
  for (const auto& ex : data) {
    for (double d : ex.distance) r.max_distance = std::max(r.max_distance, d);
    for (double t : ex.time) r.max_time = std::max(r.max_time, t);
  }
  if (!(r.max_distance > 0.0)) r.max_distance = 1.0;
  if (!(r.max_time > 0.0)) r.max_time = 1.0;
  return r;
}

/// Encoder-side inputs that do not depend on the pretrained backbone.
struct SupervisedBatch {
  TokenBatch tokens;
  std::vector<double> distance;        // B * L, padded with 0
  std::vector<double> time;            // B * L, padded with 0
  std::vector<std::size_t> positions;  // B * L, 1-based
  std::vector<int> targets;            // B * L road classes, kIgnoreIndex on padding
};

inline SupervisedBatch make_supervised_batch(const std::vector<const SequenceExample*>& examples, std::size_t pad_cell) {
  SupervisedBatch sb;
  sb.tokens = make_batch(examples, pad_cell);
  const std::size_t n = sb.tokens.batch * sb.tokens.len;
  sb.distance.assign(n, 0.0);
  sb.time.assign(n, 0.0);
  sb.positions.assign(n, 1);
  sb.targets.assign(n, num::kIgnoreIndex);
  for (std::size_t b = 0; b < examples.size(); ++b) {
    const auto* ex = examples[b];
    for (std::size_t p = 0; p < sb.tokens.len; ++p) sb.positions[b * sb.tokens.len + p] = p + 1;
    for (std::size_t p = 0; p < ex->length(); ++p) {
      const std::size_t i = b * sb.tokens.len + p;
      sb.distance[i] = ex->distance[p];
      sb.time[i] = ex->time[p];
      if (p < ex->road_class.size()) sb.targets[i] = ex->road_class[p];
    }
  }
  return sb;
}

/// Seq2seq matcher: pretrained backbone -> W_s, spatial/temporal factors,
/// fusion W', fresh encoder, decoder over road embeddings, output layer to C.
class SupervisedModel {
 public:
  SupervisedModel(num::ParamStore& store, const ModelConfig& cfg, const ata::AtaGraph& graph, const RoadVocab& vocab, const IntervalRange& range)
      : cfg_(cfg), vocab_(vocab), backbone_(store, cfg, graph) {
    if (vocab.n_roads() == 0) throw ValidationError("SupervisedModel: empty road vocabulary");
    cfg_.n_roads = vocab.n_roads();
    const std::size_t d = cfg_.d_model;
    const std::string p = kSupervisedPrefix;
    transfer_ = num::Linear(store, p + "transfer", d, cfg_.d_transfer, false);
    std::size_t fused = cfg_.d_transfer;
    if (cfg_.use_st_factor) {
      distance_ = StFactorTable(store, p + "st_distance", log_slot_boundaries(cfg_.n_slots, range.max_distance), d);
      time_ = StFactorTable(store, p + "st_time", log_slot_boundaries(cfg_.n_slots, range.max_time), d);
      fused += 4 * d;
    }
    fusion_ = num::Linear(store, p + "fusion", fused, d);
    encoder_ = num::Encoder(store, p + "encoder", cfg_.encoder_layers, d, cfg_.n_heads, cfg_.d_ff);
    road_embedding_ = store.create(p + "road_embedding", {vocab_.input_size(), d}, num::Init::kNormal, 1.0);
    decoder_ = num::Decoder(store, p + "decoder", cfg_.decoder_layers, d, cfg_.n_heads, cfg_.d_ff);
    output_ = num::Linear(store, p + "output", d, vocab_.n_roads());
  }

  const ModelConfig& config() const { return cfg_; }
  const RoadVocab& vocab() const { return vocab_; }
  const HierarchicalEncoder& backbone() const { return backbone_; }
  const StFactorTable& distance_factor() const { return distance_; }
  const StFactorTable& time_factor() const { return time_; }

  /// h_s [B, L, D]. With `frozen`, the backbone runs without recording.
  Tensor backbone_hidden(const SupervisedBatch& sb, bool frozen) const {
    if (frozen) {
      num::NoGradGuard guard;
      return backbone_.encode(sb.tokens);
    }
    return backbone_.encode(sb.tokens);
  }

  /// Spatial and temporal factors [B, L, 2D] each.
  std::pair<Tensor, Tensor> factors(const SupervisedBatch& sb) const {
    const std::size_t b = sb.tokens.batch;
    const std::size_t l = sb.tokens.len;
    const std::size_t d2 = 2 * cfg_.d_model;
    Tensor s = num::reshape(st_factor(distance_, sb.distance, sb.positions), {b, l, d2});
    Tensor t = num::reshape(st_factor(time_, sb.time, sb.positions), {b, l, d2});
    return {s, t};
  }

  /// E = Encoder(W' [W_s h_s ⊕ s ⊕ t]) with fixed position codes added
  /// before the encoder stack. `factor_scale` multiplies s and t (1 = live,
  /// 0 = zeroed, used by probes).
  Tensor memory(const SupervisedBatch& sb, const Tensor& hs, double factor_scale = 1.0) const {
    std::vector<Tensor> parts{transfer_(hs)};
    if (cfg_.use_st_factor) {
      auto [s, t] = factors(sb);
      if (factor_scale != 1.0) {
        s = num::scale(s, factor_scale);
        t = num::scale(t, factor_scale);
      }
      parts.push_back(s);
      parts.push_back(t);
    }
    Tensor fused = fusion_(parts.size() == 1 ? parts.front() : num::concat_last(parts));
    fused = num::add(fused, num::sinusoidal_positions(sb.tokens.batch, sb.tokens.len, cfg_.d_model));
    return encoder_(fused, num::AttentionMask{sb.tokens.valid, false});
  }

  /// Logits Z [B, T, C] for decoder inputs `road_in` ([B, T] vocabulary
  /// indices, starting with BOS) attending to memory E [B, L, D].
  Tensor decode(const Tensor& mem, const std::vector<std::uint8_t>& mem_valid, const std::vector<std::size_t>& road_in, std::size_t steps,
                const std::vector<std::uint8_t>& in_valid) const {
    const std::size_t b = mem.dim(0);
    if (road_in.size() != b * steps) throw DimensionError("decode: road_in must be [B, T]");
    for (std::size_t r : road_in)
      if (r >= vocab_.input_size()) throw IndexError("decode: road index " + std::to_string(r) + " outside vocabulary");
    Tensor y = num::gather_rows(road_embedding_, road_in, {b, steps});
    y = num::add(y, num::sinusoidal_positions(b, steps, cfg_.d_model));
    Tensor h = decoder_(y, mem, num::AttentionMask{in_valid, true}, num::AttentionMask{mem_valid, false});
    return output_(h);
  }

  /// Teacher-forced decoder inputs: BOS followed by the first L-1 labels;
  /// padding and unknown labels map to PAD.
  std::vector<std::size_t> teacher_inputs(const SupervisedBatch& sb) const {
    const std::size_t b = sb.tokens.batch;
    const std::size_t l = sb.tokens.len;
    std::vector<std::size_t> in(b * l, vocab_.pad());
    for (std::size_t i = 0; i < b; ++i) {
      in[i * l] = vocab_.bos();
      for (std::size_t p = 1; p < sb.tokens.lengths[i]; ++p) {
        const int prev = sb.targets[i * l + p - 1];
        in[i * l + p] = prev == num::kIgnoreIndex ? vocab_.pad() : static_cast<std::size_t>(prev);
      }
    }
    return in;
  }

  /// Teacher-forced logits Z [B, L, C].
  Tensor forward(const SupervisedBatch& sb, bool freeze_backbone = false) const {
    Tensor mem = memory(sb, backbone_hidden(sb, freeze_backbone));
    return decode(mem, sb.tokens.valid, teacher_inputs(sb), sb.tokens.len, sb.tokens.valid);
  }

  /// Summed cross-entropy over labeled, non-padded positions.
  Tensor loss(const Tensor& logits, const SupervisedBatch& sb) const {
    for (int t : sb.targets)
      if (t != num::kIgnoreIndex && (t < 0 || static_cast<std::size_t>(t) >= vocab_.n_roads())) throw IndexError("loss: label outside road vocabulary");
    return num::cross_entropy(logits, sb.targets);
  }

 private:
  ModelConfig cfg_;
  RoadVocab vocab_;
  HierarchicalEncoder backbone_;
  num::Linear transfer_;
  StFactorTable distance_;
  StFactorTable time_;
  num::Linear fusion_;
  num::Encoder encoder_;
  Tensor road_embedding_;
  num::Decoder decoder_;
  num::Linear output_;
};

/// Adam over every parameter of a store, with the backbone optionally held.
class SupervisedTrainer {
 public:
  SupervisedTrainer(const SupervisedModel& model, num::ParamStore& store, double lr) : model_(&model), store_(&store), adam_(num::AdamOptions{lr}) {
    params_ = store.tensors();
    for (const auto& e : store.entries()) backbone_mask_.push_back(e.first.rfind(ssl::kBackbonePrefix, 0) == 0);
  }

  /// One teacher-forced update; returns the summed loss of the batch.
  double train_step(const SupervisedBatch& sb, bool freeze_backbone) {
    Tensor logits = model_->forward(sb, freeze_backbone);
    Tensor loss = model_->loss(logits, sb);
    const double value = loss.item();
    if (!std::isfinite(value)) throw TrainingError("supervised loss is not finite");
    store_->zero_grad();
    loss.backward();
    num::adam_step(params_, adam_, 1.0 / static_cast<double>(sb.tokens.batch), freeze_backbone ? &backbone_mask_ : nullptr);
    store_->zero_grad();
    return value;
  }

 private:
  const SupervisedModel* model_;
  num::ParamStore* store_;
  num::AdamState adam_;
  std::vector<Tensor> params_;
  std::vector<bool> backbone_mask_;
};

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t freeze_backbone_epochs = 1;
  std::uint64_t seed = 42;
};

/// Mini-batch training over shuffled epochs. `on_epoch(epoch, loss)` runs
/// after every epoch; returning false stops training.
inline std::vector<double> train_supervised(const SupervisedModel& model, num::ParamStore& store, const std::vector<SequenceExample>& train,
                                            const TrainOptions& opts, const std::function<bool(std::size_t, double)>& on_epoch = {}) {
  if (train.empty()) throw ValidationError("train_supervised: empty training set");
  SupervisedTrainer trainer(model, store, opts.lr);
  std::vector<double> losses;
  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    const bool frozen = epoch <= opts.freeze_backbone_epochs;
    num::Rng rng = num::make_rng(opts.seed, 0x5E0000 + epoch);
    double total = 0.0;
    for (const auto& idx : bucketed_batches(train, opts.batch_size, rng)) {
      std::vector<const SequenceExample*> exs;
      for (std::size_t i : idx) exs.push_back(&train[i]);
      total += trainer.train_step(make_supervised_batch(exs, model.backbone().sentinel_row()), frozen);
    }
    losses.push_back(total);
    if (on_epoch && !on_epoch(epoch, total)) break;
  }
  return losses;
}

}  // namespace hstg::st
