#pragma once

#include <cstddef>
#include <string>

#include "hstg/atagraph/opt_gat.hpp"
#include "hstg/error.hpp"

namespace hstg {

/// Model dimensions plus the architecture switches used by ablations.
/// Defaults follow the reference settings: d_model 128, 4 encoder and
/// 4 decoder layers, 8 heads (head width d_model / heads).
struct ModelConfig {
  std::size_t d_model = 128;
  std::size_t encoder_layers = 4;  // pretrained encoder and supervised encoder
  std::size_t decoder_layers = 4;
  std::size_t n_heads = 8;         // transformer heads and opt-GAT heads (K)
  std::size_t d_ff = 512;
  std::size_t d_transfer = 128;    // D' of the transfer matrix W_s
  std::size_t n_slots = 64;        // N_r rows of each spatial/temporal factor table
  std::size_t gat_layers = 1;
  double gat_threshold_m = 150.0;

  // Filled from data.
  std::size_t n_cells = 0;  // cell vocabulary (sentinel is one extra row)
  std::size_t n_roads = 0;  // C

  double mask_rate = 0.15;
  double mean_span = 3.0;
  double k_balance = 0.5;

  bool use_tuple_channel = true;
  bool use_st_factor = true;
  ata::Aggregation gat_mode = ata::Aggregation::kOptGat;

  std::size_t head_dim() const { return d_model / n_heads; }

  void validate() const {
    if (d_model == 0 || encoder_layers == 0 || decoder_layers == 0 || n_heads == 0 || d_ff == 0 || d_transfer == 0 || gat_layers == 0) {
      throw ValidationError("model dimensions must be positive");
    }
    if (d_model % n_heads != 0) throw ValidationError("n_heads (" + std::to_string(n_heads) + ") must divide d_model (" + std::to_string(d_model) + ")");
    if (n_slots < 2) throw ValidationError("n_slots must be at least 2");
    if (!(mask_rate >= 0.0 && mask_rate <= 1.0)) throw ValidationError("mask_rate must lie in [0, 1]");
    if (!(mean_span >= 1.0)) throw ValidationError("mean_span must be >= 1");
    if (!(k_balance >= 0.0 && k_balance <= 1.0)) throw ValidationError("k_balance must lie in [0, 1]");
    if (!(gat_threshold_m > 0.0)) throw ValidationError("gat_threshold_m must be positive");
  }
};

}  // namespace hstg
