#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "hstg/datagen/synthetic.hpp"
#include "hstg/pretrain/config.hpp"
#include "hstg/pretrain/ssl.hpp"

namespace hstg::pipeline {

struct PretrainSettings {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  ssl::LossPositions loss_positions = ssl::LossPositions::kMasked;
};

struct TrainSettings {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t freeze_backbone_epochs = 1;
  double val_fraction = 0.05;
  std::size_t beam_width = 1;
};

struct AblationFlags {
  bool disable_pretrain = false;
  bool disable_st_factor = false;
  bool plain_aggregation_instead_of_opt_gat = false;
  bool disable_hierarchical_tuple_channel = false;
};

struct RunConfig {
  std::uint64_t seed = 42;
  std::filesystem::path out = "out";
  datagen::GenConfig data;
  double cell_size = 100.0;
  ModelConfig model;
  PretrainSettings pretrain;
  TrainSettings train;
  bool multiset = false;
  AblationFlags ablation;
  std::vector<std::uint64_t> ablation_seeds{42, 43, 44};
  std::vector<double> robustness_fractions{1.0, 0.8, 0.6, 0.4};
  double data_fraction = 1.0;
  std::string source_text;  // raw config file, hashed into the manifest

  /// Model settings with the ablation switches applied.
  ModelConfig effective_model() const {
    ModelConfig m = model;
    if (ablation.disable_st_factor) m.use_st_factor = false;
    if (ablation.disable_hierarchical_tuple_channel) m.use_tuple_channel = false;
    if (ablation.plain_aggregation_instead_of_opt_gat) m.gat_mode = ata::Aggregation::kMean;
    return m;
  }

  void validate() const {
    data.validate();
    model.validate();
    if (!(cell_size > 0.0)) throw ValidationError("grid.cell_size_m must be positive");
    if (pretrain.epochs == 0 || pretrain.batch_size == 0 || !(pretrain.lr > 0.0)) throw ValidationError("pretrain epochs, batch_size and lr must be positive");
    if (train.epochs == 0 || train.batch_size == 0 || !(train.lr > 0.0)) throw ValidationError("train epochs, batch_size and lr must be positive");
    if (!(train.val_fraction >= 0.0 && train.val_fraction < 1.0)) throw ValidationError("train.val_fraction must lie in [0, 1)");
    if (train.beam_width == 0) throw ValidationError("train.beam_width must be at least 1");
    if (!(data_fraction > 0.0 && data_fraction <= 1.0)) throw ValidationError("data fraction must lie in (0, 1]");
    for (double f : robustness_fractions)
      if (!(f > 0.0 && f <= 1.0)) throw ValidationError("robustness fractions must lie in (0, 1]");
    if (ablation_seeds.empty()) throw ValidationError("ablation.seeds must not be empty");
  }
};

namespace detail {

/// Reads typed scalars out of one YAML mapping, rejecting keys nobody asked
/// for. Every message carries the file name, the line and the dotted key.
class Section {
 public:
  Section(const YAML::Node& node, std::string path, std::string file) : node_(node), path_(std::move(path)), file_(std::move(file)) {
    if (node_ && !node_.IsMap()) throw ValidationError(where(node_) + ": '" + path_ + "' must be a mapping");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!node_) return;
    const YAML::Node v = get(key);
    if (!v) return;
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      throw ValidationError(where(v) + ": bad value for '" + dotted(key) + "'");
    }
  }

  void read_size(const std::string& key, std::size_t& out) {
    long long v = static_cast<long long>(out);
    read(key, v);
    if (v < 0) throw ValidationError(where(get(key)) + ": '" + dotted(key) + "' must be non-negative");
    out = static_cast<std::size_t>(v);
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(get(key), dotted(key), file_);
  }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    return get(key);
  }

  std::string where(const YAML::Node& n) const { return file_ + ":" + std::to_string(n.Mark().line + 1); }
  std::string dotted(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void reject_unknown() const {
    if (!node_) return;
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (seen_.count(key) == 0) throw ValidationError(file_ + ":" + std::to_string(kv.first.Mark().line + 1) + ": unknown key '" + dotted(key) + "'");
    }
  }

 private:
  YAML::Node get(const std::string& key) const {
    const YAML::Node& n = node_;
    return n ? n[key] : YAML::Node();
  }

  YAML::Node node_;
  std::string path_;
  std::string file_;
  std::set<std::string> seen_;
};

}  // namespace detail

/// Parses YAML config text; `file` only labels error messages.
inline RunConfig parse_run_config(const std::string& text, const std::string& file = "config") {
  RunConfig cfg;
  cfg.source_text = text;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ValidationError(file + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  detail::Section top(root, "", file);

  top.read("seed", cfg.seed);
  std::string out = cfg.out.string();
  {
    detail::Section paths = top.child("paths");
    paths.read("out", out);
    paths.reject_unknown();
  }
  cfg.out = out;

  {
    detail::Section d = top.child("data");
    d.read_size("lattice_rows", cfg.data.rows);
    d.read_size("lattice_cols", cfg.data.cols);
    d.read("spacing_m", cfg.data.spacing);
    d.read_size("n_trajectories", cfg.data.n_trajectories);
    d.read("speed_min", cfg.data.speed_min);
    d.read("speed_max", cfg.data.speed_max);
    d.read("interval_min_s", cfg.data.interval_min);
    d.read("interval_max_s", cfg.data.interval_max);
    d.read("gps_noise_sigma_m", cfg.data.noise_sigma);
    d.read("detour_fraction", cfg.data.detour_fraction);
    d.read("anchor_lon", cfg.data.anchor.lon);
    d.read("anchor_lat", cfg.data.anchor.lat);
    d.reject_unknown();
  }
  {
    detail::Section g = top.child("grid");
    g.read("cell_size_m", cfg.cell_size);
    g.read("graph_threshold_m", cfg.model.gat_threshold_m);
    g.reject_unknown();
  }
  {
    detail::Section m = top.child("model");
    m.read_size("d_model", cfg.model.d_model);
    m.read_size("encoder_layers", cfg.model.encoder_layers);
    m.read_size("decoder_layers", cfg.model.decoder_layers);
    m.read_size("n_heads", cfg.model.n_heads);
    m.read_size("d_ff", cfg.model.d_ff);
    m.read_size("d_transfer", cfg.model.d_transfer);
    m.read_size("n_slots", cfg.model.n_slots);
    m.read_size("gat_layers", cfg.model.gat_layers);
    m.reject_unknown();
  }
  {
    detail::Section p = top.child("pretrain");
    p.read_size("epochs", cfg.pretrain.epochs);
    p.read_size("batch_size", cfg.pretrain.batch_size);
    p.read("lr", cfg.pretrain.lr);
    p.read("mask_rate", cfg.model.mask_rate);
    p.read("mean_span", cfg.model.mean_span);
    p.read("k_balance", cfg.model.k_balance);
    std::string positions = "masked";
    p.read("loss_positions", positions);
    if (positions == "masked") {
      cfg.pretrain.loss_positions = ssl::LossPositions::kMasked;
    } else if (positions == "unmasked") {
      cfg.pretrain.loss_positions = ssl::LossPositions::kUnmasked;
    } else {
      throw ValidationError(p.where(p.raw("loss_positions")) + ": 'pretrain.loss_positions' must be masked or unmasked");
    }
    p.reject_unknown();
  }
  {
    detail::Section t = top.child("train");
    t.read_size("epochs", cfg.train.epochs);
    t.read_size("batch_size", cfg.train.batch_size);
    t.read("lr", cfg.train.lr);
    t.read_size("freeze_backbone_epochs", cfg.train.freeze_backbone_epochs);
    t.read("val_fraction", cfg.train.val_fraction);
    t.read_size("beam_width", cfg.train.beam_width);
    t.reject_unknown();
  }
  {
    detail::Section e = top.child("eval");
    e.read("multiset", cfg.multiset);
    e.reject_unknown();
  }
  {
    detail::Section a = top.child("ablation");
    a.read("disable_pretrain", cfg.ablation.disable_pretrain);
    a.read("disable_st_factor", cfg.ablation.disable_st_factor);
    a.read("plain_aggregation_instead_of_opt_gat", cfg.ablation.plain_aggregation_instead_of_opt_gat);
    a.read("disable_hierarchical_tuple_channel", cfg.ablation.disable_hierarchical_tuple_channel);
    a.read("seeds", cfg.ablation_seeds);
    a.reject_unknown();
  }
  {
    detail::Section r = top.child("robustness");
    r.read("fractions", cfg.robustness_fractions);
    r.reject_unknown();
  }
  top.reject_unknown();
  cfg.data.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.filename().string());
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace hstg::pipeline
