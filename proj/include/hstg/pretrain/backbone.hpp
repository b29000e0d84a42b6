#pragma once

#include <string>
#include <vector>

#include "hstg/atagraph/opt_gat.hpp"
#include "hstg/numerics/layers.hpp"
#include "hstg/pretrain/config.hpp"
#include "hstg/pretrain/masking.hpp"
#include "hstg/pretrain/tokens.hpp"

namespace hstg::ssl {

using num::Tensor;

inline const std::string kBackbonePrefix = "backbone.";

/// Hierarchical trajectory encoder shared by both training stages. A token is
///   token_proj([gat_embedding(cell) ; coord_proj(z-scored lon, lat)]) + PE(pos)
/// and the sequence goes through a pre-norm transformer encoder stack.
/// Cell embeddings come from opt-GAT layers over a learned per-cell table;
/// one extra row after the last cell is the shared mask sentinel.
class HierarchicalEncoder {
 public:
  HierarchicalEncoder(num::ParamStore& store, const ModelConfig& cfg, const ata::AtaGraph& graph) : cfg_(cfg), graph_(&graph) {
    cfg_.validate();
    if (cfg_.n_cells == 0 || graph.n_nodes != cfg_.n_cells) throw ValidationError("HierarchicalEncoder: graph nodes must equal the cell vocabulary");
    const std::size_t d = cfg_.d_model;
    const std::string p = kBackbonePrefix;
    cell_table_ = store.create(p + "cell_table", {cfg_.n_cells, d}, num::Init::kNormal, 1.0);
    for (std::size_t i = 0; i < cfg_.gat_layers; ++i) gat_.emplace_back(store, p + "gat" + std::to_string(i), d, d, cfg_.n_heads);
    sentinel_ = store.create(p + "sentinel", {1, d}, num::Init::kNormal, 1.0);
    coord_proj_ = num::Linear(store, p + "coord_proj", 2, d, false);
    token_proj_ = num::Linear(store, p + "token_proj", 2 * d, d, false);
    encoder_ = num::Encoder(store, p + "encoder", cfg_.encoder_layers, d, cfg_.n_heads, cfg_.d_ff);
  }

  const ModelConfig& config() const { return cfg_; }
  std::size_t sentinel_row() const { return cfg_.n_cells; }

  /// [n_cells + 1, D]: opt-GAT output for every cell, then the sentinel row.
  Tensor cell_embeddings() const {
    Tensor h = cell_table_;
    for (const auto& layer : gat_) h = ata::opt_gat_layer(*graph_, h, layer, cfg_.gat_mode);
    return num::concat_rows({h, sentinel_});
  }

  /// Token embeddings [B, L, D]. Masked positions read the sentinel row and
  /// the zero coordinate placeholder; position codes are added afterwards.
  Tensor embed_tokens(const TokenBatch& batch, const std::vector<MaskingPlan>* plans, const Tensor& cell_emb, bool add_positions = true) const {
    if (cell_emb.rank() != 2 || cell_emb.dim(0) != cfg_.n_cells + 1) throw DimensionError("embed_tokens: cell embedding rows must be n_cells + 1 (sentinel)");
    if (plans != nullptr && plans->size() != batch.batch) throw DimensionError("embed_tokens: one masking plan per sequence required");
    std::vector<std::size_t> cells = batch.cells;
    std::vector<double> coords = batch.coords;
    for (std::size_t b = 0; b < batch.batch; ++b)
      for (std::size_t pos = 0; pos < batch.len; ++pos) {
        const std::size_t i = b * batch.len + pos;
        const bool masked = plans != nullptr && (*plans)[b].is_masked(pos);
        if (cells[i] > cfg_.n_cells) throw IndexError("embed_tokens: cell id " + std::to_string(cells[i]) + " outside vocabulary");
        if (masked) {
          cells[i] = sentinel_row();
          coords[i * 2] = (*plans)[b].sentinel_tuple[0];
          coords[i * 2 + 1] = (*plans)[b].sentinel_tuple[1];
        }
        if (!cfg_.use_tuple_channel) coords[i * 2] = coords[i * 2 + 1] = 0.0;
      }
    Tensor grid_part = num::gather_rows(cell_emb, cells, {batch.batch, batch.len});
    Tensor tuple_part = coord_proj_(Tensor({batch.batch, batch.len, 2}, std::move(coords)));
    Tensor tokens = token_proj_(num::concat_last({grid_part, tuple_part}));
    if (!add_positions) return tokens;
    return num::add(tokens, num::sinusoidal_positions(batch.batch, batch.len, cfg_.d_model));
  }

  /// Hidden states h_s [B, L, D].
  Tensor encode(const TokenBatch& batch, const std::vector<MaskingPlan>* plans = nullptr) const {
    return encode_with(batch, plans, cell_embeddings());
  }

  Tensor encode_with(const TokenBatch& batch, const std::vector<MaskingPlan>* plans, const Tensor& cell_emb) const {
    num::AttentionMask mask{batch.valid, false};
    return encoder_(embed_tokens(batch, plans, cell_emb), mask);
  }

 private:
  ModelConfig cfg_;
  const ata::AtaGraph* graph_;
  Tensor cell_table_;
  std::vector<ata::GatParams> gat_;
  Tensor sentinel_;
  num::Linear coord_proj_;
  num::Linear token_proj_;
  num::Encoder encoder_;
};

}  // namespace hstg::ssl
