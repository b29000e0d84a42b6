#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "hstg/numerics/checkpoint.hpp"
#include "hstg/numerics/random.hpp"
#include "hstg/numerics/tensor.hpp"

namespace hstg::num {

enum class Init { kZeros, kOnes, kXavier, kNormal };

/// Ordered registry of named trainable tensors. Creation order is part of
/// the determinism contract: it fixes both initialization draws and the
/// checkpoint layout.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(make_rng(seed, 0x9a7a)) {}

  /// `std` applies to kNormal only.
  Tensor create(const std::string& name, Shape shape, Init init, double std = 0.02) {
    if (index_.count(name) != 0) throw ValidationError("duplicate parameter name: " + name);
    const std::size_t n = shape_size(shape);
    std::vector<double> values(n, 0.0);
    switch (init) {
      case Init::kZeros:
        break;
      case Init::kOnes:
        std::fill(values.begin(), values.end(), 1.0);
        break;
      case Init::kXavier: {
        const double fan_in = static_cast<double>(shape.front());
        const double fan_out = static_cast<double>(shape.back());
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (double& v : values) v = dist(rng_);
        break;
      }
      case Init::kNormal: {
        std::normal_distribution<double> dist(0.0, std);
        for (double& v : values) v = dist(rng_);
        break;
      }
    }
    Tensor t(std::move(shape), std::move(values), true);
    index_[name] = entries_.size();
    entries_.emplace_back(name, t);
    return t;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter: " + name);
    return entries_[it->second].second;
  }

  const NamedTensors& entries() const { return entries_; }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (const auto& e : entries_) out.push_back(e.second);
    return out;
  }

  /// Names with the given prefix, in creation order.
  std::vector<std::string> names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
      if (e.first.rfind(prefix, 0) == 0) out.push_back(e.first);
    return out;
  }

  void zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
  }

  /// Copies values for every checkpoint entry whose name is registered here.
  /// Returns the number of tensors copied; shape mismatches raise.
  std::size_t assign_from(const NamedTensors& saved, const std::string& prefix = "") {
    std::size_t copied = 0;
    for (const auto& [name, t] : saved) {
      if (name.rfind(prefix, 0) != 0) continue;
      auto it = index_.find(name);
      if (it == index_.end()) continue;
      Tensor dst = entries_[it->second].second;
      if (dst.shape() != t.shape()) {
        throw DimensionError("checkpoint tensor " + name + " has shape " + shape_str(t.shape()) + ", expected " + shape_str(dst.shape()));
      }
      std::copy(t.values().begin(), t.values().end(), dst.mutable_values().begin());
      ++copied;
    }
    return copied;
  }

 private:
  Rng rng_;
  NamedTensors entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace hstg::num
