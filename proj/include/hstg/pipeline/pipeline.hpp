#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hstg/atagraph/ata_graph.hpp"
#include "hstg/datagen/synthetic.hpp"
#include "hstg/eval/baseline.hpp"
#include "hstg/eval/report.hpp"
#include "hstg/numerics/checkpoint.hpp"
#include "hstg/pipeline/run_config.hpp"
#include "hstg/pretrain/ssl.hpp"
#include "hstg/stmodel/decode.hpp"

#ifndef HSTG_VERSION
#define HSTG_VERSION "0.1.0"
#endif

namespace hstg::pipeline {

namespace fs = std::filesystem;
using num::Tensor;

/// Where each stage reads and writes. Data, graph and the pretrained
/// checkpoint can live outside `root` so ablation variants share them.
struct Paths {
  fs::path root;
  fs::path data_dir;
  fs::path graph;
  fs::path pretrain_ckpt;

  explicit Paths(const fs::path& out) : root(out), data_dir(out / "data"), graph(out / "graph.tsv"), pretrain_ckpt(out / "pretrain.ckpt") {}

  fs::path trajectories() const { return data_dir / "trajectories.tsv"; }
  fs::path network() const { return data_dir / "network.tsv"; }
  fs::path routes() const { return data_dir / "routes.tsv"; }
  fs::path meta() const { return data_dir / "meta.json"; }
  fs::path pretrain_metrics() const { return root / "pretrain_metrics.csv"; }
  fs::path model_ckpt() const { return root / "model.ckpt"; }
  fs::path train_metrics() const { return root / "train_metrics.csv"; }
  fs::path matches() const { return root / "matches.tsv"; }
  fs::path report() const { return root / "report.csv"; }
  fs::path baseline_report() const { return root / "baseline_report.csv"; }
  fs::path manifest() const { return root / "manifest.json"; }
};

inline void require_file(const fs::path& path, const std::string& what, const std::string& producer) {
  if (!fs::exists(path)) throw ValidationError("missing " + what + " " + path.string() + " (run `" + producer + "` first)");
}

/// Worker count from HSTG_THREADS (default 1).
inline std::size_t thread_count() {
  const char* env = std::getenv("HSTG_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  const long v = std::strtol(env, nullptr, 10);
  return v > 0 ? static_cast<std::size_t>(v) : 1;
}

// ---------------------------------------------------------------- data

inline nlohmann::json gen_json(const datagen::GenConfig& g) {
  return {{"lattice_rows", g.rows},           {"lattice_cols", g.cols},       {"spacing_m", g.spacing},
          {"n_trajectories", g.n_trajectories}, {"speed_min", g.speed_min},     {"speed_max", g.speed_max},
          {"interval_min_s", g.interval_min},   {"interval_max_s", g.interval_max}, {"gps_noise_sigma_m", g.noise_sigma},
          {"detour_fraction", g.detour_fraction}, {"seed", g.seed},           {"anchor_lon", g.anchor.lon},
          {"anchor_lat", g.anchor.lat}};
}

inline void gen_data(const RunConfig& cfg, const Paths& paths) {
  const datagen::SyntheticNetwork net = datagen::gen_network(cfg.data);
  const auto gens = datagen::gen_trajectories(net, cfg.data);
  const geo::GridSpec grid = datagen::grid_for(cfg.data, cfg.cell_size);
  fs::create_directories(paths.data_dir);
  std::vector<geo::LabeledTrajectory> data;
  std::vector<std::pair<std::string, geo::SegmentRoute>> routes;
  for (const auto& g : gens) {
    data.push_back(g.data);
    routes.emplace_back(g.data.traj.id, g.route);
  }
  geo::write_trajectories(paths.trajectories(), data);
  geo::write_network(paths.network(), net.roads);
  geo::write_routes(paths.routes(), routes);
  nlohmann::json meta;
  meta["generator"] = gen_json(cfg.data);
  meta["grid"] = {{"min_lon", grid.min_lon}, {"min_lat", grid.min_lat}, {"max_lon", grid.max_lon}, {"max_lat", grid.max_lat},
                  {"cell_size_m", grid.cell_size}, {"n_rows", grid.n_rows},   {"n_cols", grid.n_cols}};
  std::ofstream(paths.meta(), std::ios::binary | std::ios::trunc) << meta.dump(2) << '\n';
}

struct Dataset {
  geo::GridSpec grid;
  geo::RoadNetwork network;
  std::vector<geo::LabeledTrajectory> train;  // first 80%
  std::vector<geo::LabeledTrajectory> test;
  std::map<std::string, geo::SegmentRoute> routes;
};

inline Dataset load_dataset(const RunConfig& cfg, const Paths& paths) {
  require_file(paths.meta(), "dataset metadata", "gen-data");
  require_file(paths.trajectories(), "trajectory file", "gen-data");
  require_file(paths.network(), "network file", "gen-data");
  require_file(paths.routes(), "routes file", "gen-data");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(std::ifstream(paths.meta()));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(paths.meta().string() + ": " + e.what());
  }
  if (meta.value("generator", nlohmann::json()) != gen_json(cfg.data)) {
    throw ValidationError(paths.meta().string() + " was produced from different data settings; rerun `gen-data`");
  }
  Dataset ds;
  const auto& g = meta.at("grid");
  ds.grid = geo::GridSpec{g.at("min_lon").get<double>(), g.at("min_lat").get<double>(), g.at("max_lon").get<double>(), g.at("max_lat").get<double>(),
                          g.at("cell_size_m").get<double>(), g.at("n_rows").get<std::size_t>(), g.at("n_cols").get<std::size_t>()};
  if (ds.grid.cell_size != cfg.cell_size) throw ValidationError(paths.meta().string() + ": grid cell size differs from grid.cell_size_m; rerun `gen-data`");
  ds.grid.validate();
  ds.network = geo::read_network(paths.network());
  ds.routes = geo::read_routes(paths.routes());
  auto [train, test] = datagen::split_dataset(geo::read_trajectories(paths.trajectories()));
  ds.train = std::move(train);
  ds.test = std::move(test);
  return ds;
}

/// Training tail held out for validation: the last floor(fraction * n).
struct TrainSplit {
  std::vector<geo::LabeledTrajectory> fit;
  std::vector<geo::LabeledTrajectory> val;
};

inline TrainSplit carve_validation(const std::vector<geo::LabeledTrajectory>& train, double val_fraction) {
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(train.size())));
  TrainSplit s;
  s.fit.assign(train.begin(), train.end() - static_cast<std::ptrdiff_t>(n_val));
  s.val.assign(train.end() - static_cast<std::ptrdiff_t>(n_val), train.end());
  if (s.fit.empty()) throw ValidationError("validation carve leaves no training trajectories");
  return s;
}

inline std::vector<SequenceExample> make_examples(const std::vector<geo::LabeledTrajectory>& data, const geo::GridSpec& grid, const geo::ZScoreParams& z,
                                                  const st::RoadVocab* vocab) {
  std::vector<SequenceExample> out;
  out.reserve(data.size());
  for (const auto& lt : data) out.push_back(make_example(lt, grid, z, vocab));
  return out;
}

inline std::vector<geo::Trajectory> bare(const std::vector<geo::LabeledTrajectory>& data) {
  std::vector<geo::Trajectory> out;
  for (const auto& lt : data) out.push_back(lt.traj);
  return out;
}

// ---------------------------------------------------------------- graph

inline ata::AtaGraph build_graph(const RunConfig& cfg, const Paths& paths) {
  const Dataset ds = load_dataset(cfg, paths);
  ata::AtaGraph g = ata::build_ata_graph(ds.grid, bare(ds.train), cfg.model.gat_threshold_m);
  if (!paths.graph.parent_path().empty()) fs::create_directories(paths.graph.parent_path());
  ata::write_graph_cache(paths.graph, g);
  return g;
}

inline ata::AtaGraph load_graph(const RunConfig& cfg, const Paths& paths, const Dataset& ds) {
  require_file(paths.graph, "graph cache", "build-graph");
  ata::AtaGraph g;
  if (!ata::read_graph_cache(paths.graph, ds.grid.n_cells(), cfg.model.gat_threshold_m, ds.grid.cell_size, g)) {
    throw ValidationError(paths.graph.string() + " does not match the current grid or threshold; rerun `build-graph`");
  }
  return g;
}

// ---------------------------------------------------------------- checkpoints

inline Tensor zscore_tensor(const geo::ZScoreParams& z) {
  std::vector<double> v;
  for (std::size_t f = 0; f < z.mean.size(); ++f) {
    v.push_back(z.mean[f]);
    v.push_back(z.std[f]);
  }
  return Tensor({z.mean.size(), 2}, v);
}

inline geo::ZScoreParams zscore_from(const Tensor& t) {
  geo::ZScoreParams z;
  for (std::size_t f = 0; f < t.dim(0); ++f) {
    z.mean.push_back(t.at(f * 2));
    z.std.push_back(t.at(f * 2 + 1));
  }
  return z;
}

inline const Tensor& find_tensor(const num::NamedTensors& saved, const std::string& name, const fs::path& path) {
  for (const auto& [n, t] : saved)
    if (n == name) return t;
  throw ValidationError(path.string() + ": checkpoint lacks '" + name + "'");
}

/// Copies saved values into every store entry named with `prefix`;
/// anything missing or differently shaped is a stale checkpoint.
inline void restore(num::ParamStore& store, const num::NamedTensors& saved, const std::string& prefix, const fs::path& path) {
  std::size_t copied = 0;
  try {
    copied = store.assign_from(saved, prefix);
  } catch (const DimensionError& e) {
    throw ValidationError(path.string() + " does not fit the configured model (" + e.what() + ")");
  }
  if (copied != store.names_with_prefix(prefix).size()) throw ValidationError(path.string() + " does not fit the configured model (missing tensors)");
}

// ---------------------------------------------------------------- pretrain

inline ModelConfig sized_model(const RunConfig& cfg, const Dataset& ds) {
  ModelConfig m = cfg.effective_model();
  m.n_cells = ds.grid.n_cells();
  return m;
}

struct PretrainSummary {
  std::vector<ssl::PretrainEpoch> history;
  double majority_accuracy = 0.0;
};

inline PretrainSummary pretrain(const RunConfig& cfg, const Paths& paths) {
  const Dataset ds = load_dataset(cfg, paths);
  const ata::AtaGraph graph = load_graph(cfg, paths, ds);
  const geo::ZScoreParams z = fit_trajectory_zscore(ds.train);
  const TrainSplit split = carve_validation(ds.train, cfg.train.val_fraction);
  const auto fit = make_examples(split.fit, ds.grid, z, nullptr);
  const auto held = make_examples(split.val, ds.grid, z, nullptr);
  const ModelConfig mcfg = sized_model(cfg, ds);
  num::ParamStore store(cfg.seed);
  ssl::HierarchicalEncoder enc(store, mcfg, graph);
  ssl::SslHeads heads(store, mcfg);
  ssl::PretrainOptions opts;
  opts.epochs = cfg.pretrain.epochs;
  opts.batch_size = cfg.pretrain.batch_size;
  opts.lr = cfg.pretrain.lr;
  opts.seed = cfg.seed;
  opts.loss_positions = cfg.pretrain.loss_positions;
  PretrainSummary summary;
  summary.majority_accuracy = held.empty() ? 0.0 : ssl::majority_cell_accuracy(mcfg, fit, held, cfg.seed);
  fs::create_directories(paths.root);
  std::ofstream csv(paths.pretrain_metrics(), std::ios::binary | std::ios::trunc);
  csv << "epoch,loss,grid_ce,tuple_rmse,masked_grid_accuracy,majority_cell_accuracy\n";
  summary.history = ssl::pretrain_loop(enc, heads, store, fit, held, opts, [&](const ssl::PretrainEpoch& e) {
    csv << e.epoch << ',' << text::fmt(e.loss) << ',' << text::fmt(e.grid_ce) << ',' << text::fmt(e.tuple_rmse) << ',' << text::fmt(e.masked_accuracy) << ','
        << text::fmt(summary.majority_accuracy) << '\n';
    csv.flush();
  });
  num::NamedTensors out = store.entries();
  out.emplace_back("meta.zscore", zscore_tensor(z));
  if (!paths.pretrain_ckpt.parent_path().empty()) fs::create_directories(paths.pretrain_ckpt.parent_path());
  num::save_checkpoint(paths.pretrain_ckpt, out);
  return summary;
}

// ---------------------------------------------------------------- supervised

/// Model plus everything it borrows; keep the object alive while matching.
struct LoadedModel {
  Dataset ds;
  std::unique_ptr<ata::AtaGraph> graph;  // the model keeps a pointer to it
  geo::ZScoreParams z;
  std::unique_ptr<num::ParamStore> store;
  std::unique_ptr<st::SupervisedModel> model;
};

inline st::RoadVocab vocab_for(const Dataset& ds) { return st::RoadVocab(ds.network.ids()); }

struct TrainEpochRow {
  std::size_t epoch = 0;
  double loss = 0.0;
  eval::RouteScore val;
};

inline eval::RouteScore score_examples(const st::SupervisedModel& model, const std::vector<SequenceExample>& exs, const std::vector<geo::LabeledTrajectory>& truth,
                                       const eval::RoadLengthTable& lengths, bool multiset) {
  if (exs.empty()) return {};
  const auto matches = st::match_all(model, exs);
  std::map<std::string, geo::SegmentRoute> routes;
  for (const auto& lt : truth) routes[lt.traj.id] = geo::collapse_to_route(lt.true_roads);
  return eval::corpus_report(matches, routes, lengths, multiset).macro;
}

/// Fine-tunes on the first `data_fraction` of the fit portion. The saved
/// model is the epoch with the best validation F1 (the last epoch when no
/// validation carve exists).
inline std::vector<TrainEpochRow> train(const RunConfig& cfg, const Paths& paths) {
  const Dataset ds = load_dataset(cfg, paths);
  const ata::AtaGraph graph = load_graph(cfg, paths, ds);
  num::NamedTensors pre;
  if (!cfg.ablation.disable_pretrain) {
    require_file(paths.pretrain_ckpt, "pretrained checkpoint", "pretrain");
    pre = num::load_checkpoint(paths.pretrain_ckpt);
  }
  const geo::ZScoreParams z = fit_trajectory_zscore(ds.train);
  const st::RoadVocab vocab = vocab_for(ds);
  const TrainSplit split = carve_validation(ds.train, cfg.train.val_fraction);
  auto fit = make_examples(split.fit, ds.grid, z, &vocab);
  const auto n_use = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.data_fraction * static_cast<double>(fit.size()) + 1e-9)));
  fit.resize(std::min(fit.size(), n_use));
  const auto val = make_examples(split.val, ds.grid, z, &vocab);
  const st::IntervalRange range = st::interval_range(make_examples(ds.train, ds.grid, z, nullptr));

  num::ParamStore store(cfg.seed);
  st::SupervisedModel model(store, sized_model(cfg, ds), graph, vocab, range);
  if (!cfg.ablation.disable_pretrain) restore(store, pre, ssl::kBackbonePrefix, paths.pretrain_ckpt);

  const eval::RoadLengthTable lengths(ds.network);
  st::TrainOptions opts;
  opts.epochs = cfg.train.epochs;
  opts.batch_size = cfg.train.batch_size;
  opts.lr = cfg.train.lr;
  opts.freeze_backbone_epochs = cfg.train.freeze_backbone_epochs;
  opts.seed = cfg.seed;

  fs::create_directories(paths.root);
  std::ofstream csv(paths.train_metrics(), std::ios::binary | std::ios::trunc);
  csv << "epoch,loss,val_precision,val_recall,val_f1\n";
  std::vector<TrainEpochRow> rows;
  double best_f1 = -1.0;
  std::vector<std::vector<double>> best;
  st::train_supervised(model, store, fit, opts, [&](std::size_t epoch, double loss) {
    TrainEpochRow row{epoch, loss, score_examples(model, val, split.val, lengths, cfg.multiset)};
    rows.push_back(row);
    csv << epoch << ',' << text::fmt(loss) << ',' << text::fmt(row.val.precision) << ',' << text::fmt(row.val.recall) << ',' << text::fmt(row.val.f1) << '\n';
    csv.flush();
    if (!val.empty() && row.val.f1 > best_f1) {
      best_f1 = row.val.f1;
      best.clear();
      for (const auto& e : store.entries()) best.emplace_back(e.second.values().begin(), e.second.values().end());
    }
    return true;
  });
  if (!best.empty()) {
    std::size_t i = 0;
    for (const auto& e : store.entries()) {
      Tensor t = e.second;
      std::copy(best[i].begin(), best[i].end(), t.mutable_values().begin());
      ++i;
    }
  }
  num::NamedTensors out = store.entries();
  out.emplace_back("meta.zscore", zscore_tensor(z));
  std::vector<double> ids;
  for (auto id : vocab.ids()) ids.push_back(static_cast<double>(id));
  out.emplace_back("meta.road_ids", Tensor({ids.size()}, ids));
  out.emplace_back("meta.interval_range", Tensor({2}, {range.max_distance, range.max_time}));
  num::save_checkpoint(paths.model_ckpt(), out);
  return rows;
}

inline LoadedModel load_model(const RunConfig& cfg, const Paths& paths) {
  require_file(paths.model_ckpt(), "model checkpoint", "train");
  LoadedModel lm;
  lm.ds = load_dataset(cfg, paths);
  lm.graph = std::make_unique<ata::AtaGraph>(load_graph(cfg, paths, lm.ds));
  const num::NamedTensors saved = num::load_checkpoint(paths.model_ckpt());
  lm.z = zscore_from(find_tensor(saved, "meta.zscore", paths.model_ckpt()));
  const Tensor& ids_t = find_tensor(saved, "meta.road_ids", paths.model_ckpt());
  std::vector<geo::RoadId> ids;
  for (double v : ids_t.values()) ids.push_back(static_cast<geo::RoadId>(v));
  const Tensor& range_t = find_tensor(saved, "meta.interval_range", paths.model_ckpt());
  lm.store = std::make_unique<num::ParamStore>(cfg.seed);
  lm.model = std::make_unique<st::SupervisedModel>(*lm.store, sized_model(cfg, lm.ds), *lm.graph, st::RoadVocab(ids),
                                                   st::IntervalRange{range_t.values()[0], range_t.values()[1]});
  restore(*lm.store, saved, "", paths.model_ckpt());
  return lm;
}

/// Greedy (or beam) matching over trajectory batches split across
/// HSTG_THREADS workers; output order follows the input.
inline std::vector<st::MatchResult> match_parallel(const st::SupervisedModel& model, const std::vector<SequenceExample>& exs, const st::DecodeOptions& opts) {
  const std::size_t workers = std::min(thread_count(), std::max<std::size_t>(1, exs.size()));
  if (workers <= 1) return st::match_all(model, exs, opts);
  std::vector<std::vector<st::MatchResult>> parts(workers);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (exs.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        const std::size_t lo = std::min(exs.size(), w * chunk);
        const std::size_t hi = std::min(exs.size(), lo + chunk);
        parts[w] = st::match_all(model, std::vector<SequenceExample>(exs.begin() + static_cast<std::ptrdiff_t>(lo), exs.begin() + static_cast<std::ptrdiff_t>(hi)), opts);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<st::MatchResult> out;
  for (auto& p : parts)
    for (auto& r : p) out.push_back(std::move(r));
  return out;
}

inline void write_matches(const fs::path& path, const std::vector<st::MatchResult>& matches) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (const auto& m : matches) out << m.id << '\t' << text::join_ints(m.labels) << '\t' << text::join_ints(m.route.roads) << '\n';
}

inline std::vector<st::MatchResult> read_matches(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("missing matches file: " + path.string());
  std::vector<st::MatchResult> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    auto cols = text::split(line, '\t');
    if (cols.size() != 3) throw ValidationError(where + ": expected traj_id, labels, route");
    st::MatchResult m;
    m.id = std::string(cols[0]);
    for (auto tok : text::split(cols[1], ',')) m.labels.push_back(text::parse_int(tok, where));
    for (auto tok : text::split(cols[2], ',')) m.route.roads.push_back(text::parse_int(tok, where));
    out.push_back(std::move(m));
  }
  return out;
}

inline std::vector<st::MatchResult> match(const RunConfig& cfg, const Paths& paths) {
  const LoadedModel lm = load_model(cfg, paths);
  const auto test = make_examples(lm.ds.test, lm.ds.grid, lm.z, nullptr);
  st::DecodeOptions opts;
  opts.beam_width = cfg.train.beam_width;
  auto matches = match_parallel(*lm.model, test, opts);
  write_matches(paths.matches(), matches);
  return matches;
}

struct EvalSummary {
  eval::CorpusReport model;
  eval::CorpusReport baseline;
};

inline EvalSummary evaluate(const RunConfig& cfg, const Paths& paths) {
  require_file(paths.model_ckpt(), "model checkpoint", "train");
  require_file(paths.matches(), "matches file", "match");
  const Dataset ds = load_dataset(cfg, paths);
  const eval::RoadLengthTable lengths(ds.network);
  EvalSummary s;
  s.model = eval::corpus_report(read_matches(paths.matches()), ds.routes, lengths, cfg.multiset);
  std::vector<st::MatchResult> base;
  for (const auto& lt : ds.test) base.push_back(eval::nearest_road_baseline(lt.traj, ds.network, ds.grid.origin()));
  s.baseline = eval::corpus_report(base, ds.routes, lengths, cfg.multiset);
  eval::write_report(paths.report(), s.model);
  eval::write_report(paths.baseline_report(), s.baseline);
  return s;
}

// ---------------------------------------------------------------- manifest

inline std::string config_hash(const RunConfig& cfg) {
  const std::string key = cfg.source_text + "\nseed=" + std::to_string(cfg.seed) + "\nout=" + cfg.out.string() + "\nfraction=" + text::fmt(cfg.data_fraction);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(key)));
  return buf;
}

/// Adds one stage timing to `manifest.json` under the run root.
inline void record_stage(const RunConfig& cfg, const Paths& paths, const std::string& stage, double seconds) {
  fs::create_directories(paths.root);
  nlohmann::json m = nlohmann::json::object();
  if (fs::exists(paths.manifest())) {
    try {
      m = nlohmann::json::parse(std::ifstream(paths.manifest()));
    } catch (const nlohmann::json::exception&) {
      m = nlohmann::json::object();
    }
    if (!m.is_object()) m = nlohmann::json::object();
  }
  const std::string hash = config_hash(cfg);
  if (m.value("config_hash", std::string()) != hash) m = nlohmann::json::object();
  m["config_hash"] = hash;
  m["seed"] = cfg.seed;
  m["version"] = HSTG_VERSION;
  m["data_fraction"] = cfg.data_fraction;
  m["stages"][stage] = {{"wall_seconds", seconds}};
  std::ofstream(paths.manifest(), std::ios::binary | std::ios::trunc) << m.dump(2) << '\n';
}

template <typename F>
auto timed(const RunConfig& cfg, const Paths& paths, const std::string& stage, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  auto finish = [&] { record_stage(cfg, paths, stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()); };
  if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
    f();
    finish();
  } else {
    auto r = f();
    finish();
    return r;
  }
}

// ---------------------------------------------------------------- experiments

struct Variant {
  std::string name;
  AblationFlags flags;
};

inline std::vector<Variant> ablation_variants() {
  return {{"full", {}},
          {"w/o opt-GAT", {false, false, true, false}},
          {"w/o hierarchical repr.", {false, false, false, true}},
          {"w/o pretrain", {true, false, false, false}},
          {"w/o ST-factor", {false, true, false, false}}};
}

/// Directory-safe form of a variant name.
inline std::string slug(const std::string& name) {
  std::string s;
  for (char c : name) s += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return s;
}

/// Scores of finished runs, keyed by seed / variant / fraction, plus the
/// pretrained checkpoints produced so far. Shared across experiments within
/// one process so identical runs happen once.
struct RunRegistry {
  std::map<std::string, EvalSummary> runs;
  std::map<std::string, fs::path> pretrained;
  std::function<void(const std::string&)> log;
};

/// Backbone identity: the switches that change pretrained weights.
inline std::string backbone_key(std::uint64_t seed, const AblationFlags& f) {
  return "seed=" + std::to_string(seed) + (f.plain_aggregation_instead_of_opt_gat ? "|mean" : "|gat") + (f.disable_hierarchical_tuple_channel ? "|grid" : "|tuple");
}

/// Trains, matches and scores one variant under `base.out / experiment`,
/// reusing the shared dataset and graph at the base paths.
inline EvalSummary run_variant(const RunConfig& base, const std::uint64_t seed, const AblationFlags& flags, double fraction, RunRegistry& reg) {
  const std::string key = backbone_key(seed, flags) + (flags.disable_pretrain ? "|scratch" : "|pre") + (flags.disable_st_factor ? "|nost" : "|st") +
                          "|fraction=" + text::fmt(fraction);
  if (auto it = reg.runs.find(key); it != reg.runs.end()) return it->second;
  RunConfig cfg = base;
  cfg.seed = seed;
  cfg.data.seed = base.data.seed;  // the corpus stays fixed across seeds
  cfg.ablation = flags;
  cfg.data_fraction = fraction;
  const Paths shared(base.out);
  Paths p(base.out / "runs" / slug(key));
  p.data_dir = shared.data_dir;
  p.graph = shared.graph;
  if (!flags.disable_pretrain) {
    const std::string bkey = backbone_key(seed, flags);
    auto it = reg.pretrained.find(bkey);
    if (it == reg.pretrained.end()) {
      p.pretrain_ckpt = base.out / "runs" / ("pretrain_" + slug(bkey) + ".ckpt");
      if (reg.log) reg.log("pretrain " + bkey);
      timed(cfg, p, "pretrain", [&] { return pretrain(cfg, p); });
      reg.pretrained[bkey] = p.pretrain_ckpt;
    } else {
      p.pretrain_ckpt = it->second;
    }
  }
  if (reg.log) reg.log("train " + key);
  timed(cfg, p, "train", [&] { return train(cfg, p); });
  timed(cfg, p, "match", [&] { return match(cfg, p); });
  EvalSummary s = timed(cfg, p, "eval", [&] { return evaluate(cfg, p); });
  if (reg.log) reg.log("f1 " + text::fmt(s.model.macro.f1) + " " + key);
  reg.runs[key] = s;
  return s;
}

/// Shared data and graph for experiment runs; generated when absent.
inline void ensure_corpus(const RunConfig& cfg) {
  const Paths p(cfg.out);
  bool fresh = false;
  try {
    load_dataset(cfg, p);
  } catch (const ValidationError&) {
    timed(cfg, p, "gen-data", [&] { gen_data(cfg, p); });
    fresh = true;
  }
  if (fresh || !fs::exists(p.graph)) {
    timed(cfg, p, "build-graph", [&] { return build_graph(cfg, p); });
    return;
  }
  try {
    load_graph(cfg, p, load_dataset(cfg, p));
  } catch (const ValidationError&) {
    timed(cfg, p, "build-graph", [&] { return build_graph(cfg, p); });
  }
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct AblationRow {
  std::string variant;
  eval::RouteScore median;
  std::vector<double> f1_per_seed;
};

/// The five-variant grid over every configured seed; writes
/// ablation_runs.csv and ablation.csv (seed medians).
inline std::vector<AblationRow> ablate(const RunConfig& cfg, RunRegistry& reg) {
  ensure_corpus(cfg);
  std::vector<AblationRow> rows;
  std::ofstream runs(cfg.out / "ablation_runs.csv", std::ios::binary | std::ios::trunc);
  runs << "seed,variant,precision,recall,f1\n";
  for (const auto& v : ablation_variants()) {
    AblationRow row{v.name, {}, {}};
    std::vector<double> p;
    std::vector<double> r;
    for (auto seed : cfg.ablation_seeds) {
      const EvalSummary s = run_variant(cfg, seed, v.flags, 1.0, reg);
      runs << seed << ',' << v.name << ',' << text::fmt(s.model.macro.precision) << ',' << text::fmt(s.model.macro.recall) << ',' << text::fmt(s.model.macro.f1) << '\n';
      runs.flush();
      p.push_back(s.model.macro.precision);
      r.push_back(s.model.macro.recall);
      row.f1_per_seed.push_back(s.model.macro.f1);
    }
    row.median = {median(p), median(r), median(row.f1_per_seed), 0.0, 0.0, 0.0};
    rows.push_back(row);
  }
  std::ofstream out(cfg.out / "ablation.csv", std::ios::binary | std::ios::trunc);
  out << "variant,precision,recall,f1\n";
  for (const auto& row : rows) out << row.variant << ',' << text::fmt(row.median.precision) << ',' << text::fmt(row.median.recall) << ',' << text::fmt(row.median.f1) << '\n';
  return rows;
}

struct RobustnessRow {
  double fraction = 1.0;
  double f1_pretrained = 0.0;  // seed median
  double f1_scratch = 0.0;
};

/// Pretrained and from-scratch models on each fraction of the training fit
/// portion; pretraining always sees the whole training split.
inline std::vector<RobustnessRow> robustness(const RunConfig& cfg, RunRegistry& reg) {
  ensure_corpus(cfg);
  std::vector<RobustnessRow> rows;
  std::ofstream runs(cfg.out / "robustness_runs.csv", std::ios::binary | std::ios::trunc);
  runs << "seed,fraction,pretrained,f1\n";
  for (double f : cfg.robustness_fractions) {
    RobustnessRow row;
    row.fraction = f;
    std::vector<double> pre;
    std::vector<double> scratch;
    for (auto seed : cfg.ablation_seeds) {
      for (bool disable : {false, true}) {
        AblationFlags flags;
        flags.disable_pretrain = disable;
        const double f1 = run_variant(cfg, seed, flags, f, reg).model.macro.f1;
        (disable ? scratch : pre).push_back(f1);
        runs << seed << ',' << text::fmt(f) << ',' << (disable ? 0 : 1) << ',' << text::fmt(f1) << '\n';
        runs.flush();
      }
    }
    row.f1_pretrained = median(pre);
    row.f1_scratch = median(scratch);
    rows.push_back(row);
  }
  std::ofstream out(cfg.out / "robustness.csv", std::ios::binary | std::ios::trunc);
  out << "fraction,f1_pretrained,f1_scratch\n";
  for (const auto& r : rows) out << text::fmt(r.fraction) << ',' << text::fmt(r.f1_pretrained) << ',' << text::fmt(r.f1_scratch) << '\n';
  return rows;
}

}  // namespace hstg::pipeline
