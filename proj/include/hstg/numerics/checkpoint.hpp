#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "hstg/numerics/tensor.hpp"

namespace hstg::num {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

inline std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ValidationError("truncated checkpoint: " + path);
  return v;
}

}  // namespace detail

/// Layout: "HSTG", u32 version, then per tensor: u32 name length, name bytes,
/// u32 rank, u32 extents, little-endian f64 payload.
inline void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write checkpoint: " + path.string());
  out.write("HSTG", 4);
  detail::put_u32(out, kCheckpointVersion);
  for (const auto& [name, t] : tensors) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(e));
    out.write(reinterpret_cast<const char*>(t.values().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw ValidationError("failed writing checkpoint: " + path.string());
}

inline NamedTensors load_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("missing checkpoint: " + p);
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, "HSTG", 4) != 0) throw ValidationError("not a checkpoint (bad magic): " + p);
  const std::uint32_t version = detail::get_u32(in, p);
  if (version != kCheckpointVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version) + ": " + p);
  NamedTensors result;
  while (in.peek() != std::ifstream::traits_type::eof()) {
    const std::uint32_t len = detail::get_u32(in, p);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw ValidationError("truncated checkpoint: " + p);
    const std::uint32_t rank = detail::get_u32(in, p);
    Shape shape(rank);
    for (auto& e : shape) e = detail::get_u32(in, p);
    std::vector<double> values(shape_size(shape));
    if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      throw ValidationError("truncated checkpoint: " + p);
    }
    result.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return result;
}

}  // namespace hstg::num
