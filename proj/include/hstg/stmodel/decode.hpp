#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "hstg/stmodel/supervised_model.hpp"

namespace hstg::st {

struct DecodeOptions {
  std::size_t beam_width = 1;  // 1 = greedy
  double temperature = 1.0;    // divides logits before the softmax
  std::size_t batch_size = 32;
};

struct MatchResult {
  std::string id;
  std::vector<geo::RoadId> labels;  // one per point
  geo::SegmentRoute route;
  std::vector<double> probs;        // probability of each chosen road
};

namespace detail {

/// Softmax of one logit row at temperature `temp`, in place; returns argmax
/// (lowest index on ties).
inline std::size_t softmax_argmax(std::vector<double>& row, double temp) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c)
    if (row[c] > row[best]) best = c;
  const double mx = row[best];
  double z = 0.0;
  for (double& v : row) z += (v = std::exp((v - mx) / temp));
  for (double& v : row) v /= z;
  return best;
}

inline void check_options(const DecodeOptions& opts) {
  if (opts.beam_width == 0) throw ValidationError("beam width must be at least 1");
  if (!(opts.temperature > 0.0) || !std::isfinite(opts.temperature)) throw ValidationError("temperature must be positive");
  if (opts.batch_size == 0) throw ValidationError("decode batch size must be positive");
}

inline MatchResult finish(const SupervisedModel& model, const SequenceExample& ex, const std::vector<std::size_t>& classes, std::vector<double> probs) {
  MatchResult r;
  r.id = ex.id;
  for (std::size_t c : classes) r.labels.push_back(model.vocab().road_of(c));
  r.route = geo::collapse_to_route(r.labels);
  r.probs = std::move(probs);
  return r;
}

}  // namespace detail

/// Autoregressive greedy decoding of a batch: exactly L_b steps per
/// trajectory from BOS, argmax road at every step. The encoder side runs once.
inline std::vector<MatchResult> greedy_decode(const SupervisedModel& model, const std::vector<const SequenceExample*>& exs, double temperature = 1.0) {
  num::NoGradGuard guard;
  for (const auto* ex : exs)
    if (ex->length() < 2) throw ValidationError("cannot match trajectory " + ex->id + ": fewer than 2 points");
  const SupervisedBatch sb = make_supervised_batch(exs, model.backbone().sentinel_row());
  const std::size_t b = sb.tokens.batch;
  const std::size_t l = sb.tokens.len;
  const std::size_t c = model.vocab().n_roads();
  const Tensor mem = model.memory(sb, model.backbone_hidden(sb, true));
  std::vector<std::vector<std::size_t>> chosen(b);
  std::vector<std::vector<double>> probs(b);
  for (std::size_t step = 0; step < l; ++step) {
    const std::size_t t = step + 1;
    std::vector<std::size_t> road_in(b * t);
    for (std::size_t i = 0; i < b; ++i) {
      road_in[i * t] = model.vocab().bos();
      for (std::size_t p = 1; p < t; ++p) road_in[i * t + p] = chosen[i][p - 1];
    }
    const Tensor logits = model.decode(mem, sb.tokens.valid, road_in, t, std::vector<std::uint8_t>(b * t, 1));
    auto lv = logits.values();
    for (std::size_t i = 0; i < b; ++i) {
      std::vector<double> row(lv.begin() + static_cast<std::ptrdiff_t>((i * t + step) * c), lv.begin() + static_cast<std::ptrdiff_t>((i * t + step + 1) * c));
      const std::size_t best = detail::softmax_argmax(row, temperature);
      chosen[i].push_back(best);
      probs[i].push_back(row[best]);
    }
  }
  std::vector<MatchResult> out;
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t len = exs[i]->length();
    chosen[i].resize(len);
    probs[i].resize(len);
    out.push_back(detail::finish(model, *exs[i], chosen[i], std::move(probs[i])));
  }
  return out;
}

/// Beam search over one trajectory, keeping the `width` highest cumulative
/// log-probability prefixes for exactly L steps.
inline MatchResult beam_decode(const SupervisedModel& model, const SequenceExample& ex, std::size_t width, double temperature = 1.0) {
  num::NoGradGuard guard;
  if (ex.length() < 2) throw ValidationError("cannot match trajectory " + ex.id + ": fewer than 2 points");
  const std::size_t l = ex.length();
  const std::size_t c = model.vocab().n_roads();
  const SupervisedBatch one = make_supervised_batch({&ex}, model.backbone().sentinel_row());
  const Tensor mem1 = model.memory(one, model.backbone_hidden(one, true));

  struct Beam {
    std::vector<std::size_t> classes;
    std::vector<double> probs;
    double score = 0.0;
  };
  std::vector<Beam> beams(1);
  for (std::size_t step = 0; step < l; ++step) {
    const std::size_t k = beams.size();
    const std::size_t t = step + 1;
    const Tensor mem = k == 1 ? mem1 : num::reshape(num::concat_rows(std::vector<Tensor>(k, num::reshape(mem1, {l, mem1.dim(2)}))), {k, l, mem1.dim(2)});
    std::vector<std::uint8_t> mem_valid;
    for (std::size_t i = 0; i < k; ++i) mem_valid.insert(mem_valid.end(), one.tokens.valid.begin(), one.tokens.valid.end());
    std::vector<std::size_t> road_in(k * t);
    for (std::size_t i = 0; i < k; ++i) {
      road_in[i * t] = model.vocab().bos();
      for (std::size_t p = 1; p < t; ++p) road_in[i * t + p] = beams[i].classes[p - 1];
    }
    const Tensor logits = model.decode(mem, mem_valid, road_in, t, std::vector<std::uint8_t>(k * t, 1));
    auto lv = logits.values();
    struct Cand {
      double score;
      std::size_t beam;
      std::size_t cls;
      double prob;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < k; ++i) {
      std::vector<double> row(lv.begin() + static_cast<std::ptrdiff_t>((i * t + step) * c), lv.begin() + static_cast<std::ptrdiff_t>((i * t + step + 1) * c));
      detail::softmax_argmax(row, temperature);
      for (std::size_t cls = 0; cls < c; ++cls) cands.push_back({beams[i].score + std::log(std::max(row[cls], 1e-300)), i, cls, row[cls]});
    }
    const std::size_t keep = std::min(width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.beam != b.beam) return a.beam < b.beam;
      return a.cls < b.cls;
    });
    std::vector<Beam> next;
    for (std::size_t i = 0; i < keep; ++i) {
      Beam nb = beams[cands[i].beam];
      nb.classes.push_back(cands[i].cls);
      nb.probs.push_back(cands[i].prob);
      nb.score = cands[i].score;
      next.push_back(std::move(nb));
    }
    beams = std::move(next);
  }
  return detail::finish(model, ex, beams.front().classes, beams.front().probs);
}

/// Matches every example, batching greedy decoding and falling back to beam
/// search per trajectory when beam_width > 1.
inline std::vector<MatchResult> match_all(const SupervisedModel& model, const std::vector<SequenceExample>& data, const DecodeOptions& opts = {}) {
  detail::check_options(opts);
  std::vector<MatchResult> out;
  out.reserve(data.size());
  if (opts.beam_width > 1) {
    for (const auto& ex : data) out.push_back(beam_decode(model, ex, opts.beam_width, opts.temperature));
    return out;
  }
  // Batches of similar length waste fewer decoder steps on padding.
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return data[a].length() < data[b].length(); });
  out.resize(data.size());
  for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
    std::vector<const SequenceExample*> exs;
    const std::size_t stop = std::min(order.size(), start + opts.batch_size);
    for (std::size_t i = start; i < stop; ++i) exs.push_back(&data[order[i]]);
    auto results = greedy_decode(model, exs, opts.temperature);
    for (std::size_t i = start; i < stop; ++i) out[order[i]] = std::move(results[i - start]);
  }
  return out;
}

}  // namespace hstg::st
