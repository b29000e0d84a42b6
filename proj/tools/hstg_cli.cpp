// Command-line driver: one pipeline stage per subcommand.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hstg/hstg.hpp"

namespace {

using namespace hstg;
using namespace hstg::pipeline;

int run_command(const std::string& command, RunConfig cfg) {
  const Paths paths(cfg.out);
  RunRegistry reg;
  reg.log = [](const std::string& msg) { std::cerr << "[hstg] " << msg << '\n'; };
  if (command == "gen-data") {
    timed(cfg, paths, "gen-data", [&] { gen_data(cfg, paths); });
  } else if (command == "build-graph") {
    const auto g = timed(cfg, paths, "build-graph", [&] { return build_graph(cfg, paths); });
    std::cout << "graph: " << g.n_nodes << " nodes, " << g.n_edges() << " edges\n";
  } else if (command == "pretrain") {
    const auto s = timed(cfg, paths, "pretrain", [&] { return pretrain(cfg, paths); });
    if (!s.history.empty()) {
      const auto& last = s.history.back();
      std::printf("pretrain: %zu epochs, loss %.4f, masked-grid accuracy %.4f (majority %.4f)\n", s.history.size(), last.loss, last.masked_accuracy,
                  s.majority_accuracy);
    }
  } else if (command == "train") {
    const auto rows = timed(cfg, paths, "train", [&] { return train(cfg, paths); });
    for (const auto& r : rows) std::printf("epoch %zu loss %.4f val_f1 %.4f\n", r.epoch, r.loss, r.val.f1);
  } else if (command == "match") {
    const auto m = timed(cfg, paths, "match", [&] { return match(cfg, paths); });
    std::cout << "matched " << m.size() << " trajectories\n";
  } else if (command == "eval") {
    const auto s = timed(cfg, paths, "eval", [&] { return evaluate(cfg, paths); });
    std::printf("model    P %.4f R %.4f F1 %.4f\n", s.model.macro.precision, s.model.macro.recall, s.model.macro.f1);
    std::printf("baseline P %.4f R %.4f F1 %.4f\n", s.baseline.macro.precision, s.baseline.macro.recall, s.baseline.macro.f1);
  } else if (command == "ablate") {
    const auto rows = timed(cfg, paths, "ablate", [&] { return ablate(cfg, reg); });
    for (const auto& r : rows) std::printf("%-24s F1 %.4f\n", r.variant.c_str(), r.median.f1);
  } else if (command == "robustness") {
    const auto rows = timed(cfg, paths, "robustness", [&] { return robustness(cfg, reg); });
    for (const auto& r : rows) std::printf("fraction %.2f  pretrained %.4f  scratch %.4f\n", r.fraction, r.f1_pretrained, r.f1_scratch);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Map matching with hierarchical self-supervised pretraining"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  double fraction = 1.0;
  const char* commands[][2] = {{"gen-data", "generate the synthetic corpus"},
                               {"build-graph", "build the cell adjacency graph"},
                               {"pretrain", "self-supervised pretraining"},
                               {"train", "supervised fine-tuning"},
                               {"match", "match the test split"},
                               {"eval", "score matches against ground truth"},
                               {"ablate", "run the ablation grid"},
                               {"robustness", "train on shrinking data fractions"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "YAML run configuration")->required();
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--out", out_dir, "override the output directory");
    sub->add_option("--data-fraction", fraction, "fraction of the training split used for fine-tuning")->check(CLI::Range(0.0, 1.0));
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  CLI::App* sub = app.get_subcommands().front();
  try {
    RunConfig cfg = load_run_config(config_path);
    if (sub->count("--seed") > 0) {
      cfg.seed = seed;
      cfg.data.seed = seed;
    }
    if (sub->count("--out") > 0) cfg.out = out_dir;
    if (sub->count("--data-fraction") > 0) cfg.data_fraction = fraction;
    cfg.validate();
    return run_command(command, cfg);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return 2;
  }
}
