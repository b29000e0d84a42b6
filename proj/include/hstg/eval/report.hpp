#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "hstg/eval/metrics.hpp"
#include "hstg/stmodel/decode.hpp"

namespace hstg::eval {

struct TrajectoryScore {
  std::string id;
  RouteScore score;
};

struct CorpusReport {
  std::vector<TrajectoryScore> rows;
  RouteScore macro;  // unweighted mean of the per-trajectory rows
};

/// Scores every matched route against the true route with the same id.
inline CorpusReport corpus_report(const std::vector<st::MatchResult>& matches, const std::map<std::string, geo::SegmentRoute>& truths,
                                  const RoadLengthTable& lengths, bool multiset = false) {
  if (matches.empty()) throw ValidationError("corpus_report: nothing to score");
  CorpusReport rep;
  for (const auto& m : matches) {
    auto it = truths.find(m.id);
    if (it == truths.end()) throw ValidationError("corpus_report: no ground truth for trajectory '" + m.id + "'");
    rep.rows.push_back({m.id, route_metrics(m.route, it->second, lengths, multiset)});
  }
  const double n = static_cast<double>(rep.rows.size());
  for (const auto& r : rep.rows) {
    rep.macro.precision += r.score.precision / n;
    rep.macro.recall += r.score.recall / n;
    rep.macro.f1 += r.score.f1 / n;
    rep.macro.len_matched += r.score.len_matched / n;
    rep.macro.len_truth += r.score.len_truth / n;
    rep.macro.len_intersection += r.score.len_intersection / n;
  }
  return rep;
}

inline void write_report(const std::filesystem::path& path, const CorpusReport& rep) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  auto row = [&](const std::string& id, const RouteScore& s) {
    out << id << ',' << text::fmt(s.precision) << ',' << text::fmt(s.recall) << ',' << text::fmt(s.f1) << ',' << text::fmt(s.len_matched) << ','
        << text::fmt(s.len_truth) << ',' << text::fmt(s.len_intersection) << '\n';
  };
  out << "traj_id,precision,recall,f1,len_matched_m,len_truth_m,len_intersection_m\n";
  for (const auto& r : rep.rows) row(r.id, r.score);
  row("ALL", rep.macro);
}

}  // namespace hstg::eval
