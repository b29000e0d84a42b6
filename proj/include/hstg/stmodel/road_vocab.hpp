#pragma once

#include <algorithm>
#include <map>
#include <vector>

#include "hstg/geo/geo.hpp"

namespace hstg::st {

/// Dense class indices for the C real roads, followed by reserved decoder
/// tokens BOS = C, EOS = C + 1, PAD = C + 2.
class RoadVocab {
 public:
  RoadVocab() = default;
  explicit RoadVocab(std::vector<geo::RoadId> ids) : ids_(std::move(ids)) {
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (ids_[i] < 0) throw ValidationError("road ids must be non-negative, got " + std::to_string(ids_[i]));
      index_[ids_[i]] = i;
    }
  }

  std::size_t n_roads() const { return ids_.size(); }
  std::size_t bos() const { return ids_.size(); }
  std::size_t eos() const { return ids_.size() + 1; }
  std::size_t pad() const { return ids_.size() + 2; }
  std::size_t input_size() const { return ids_.size() + 3; }

  bool contains(geo::RoadId id) const { return index_.count(id) != 0; }

  std::size_t class_of(geo::RoadId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw IndexError("road id " + std::to_string(id) + " not in vocabulary");
    return it->second;
  }

  geo::RoadId road_of(std::size_t cls) const {
    if (cls >= ids_.size()) throw IndexError("class " + std::to_string(cls) + " is not a road");
    return ids_[cls];
  }

  const std::vector<geo::RoadId>& ids() const { return ids_; }

 private:
  std::vector<geo::RoadId> ids_;
  std::map<geo::RoadId, std::size_t> index_;
};

}  // namespace hstg::st
