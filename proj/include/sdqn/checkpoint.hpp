#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "sdqn/nn.hpp"
#include "sdqn/tensor.hpp"

namespace sdqn {

// Checkpoint file layout (little endian):
//   "SDQN" | u32 version=1 | u32 tensor_count |
//   per tensor: u16 name_len | name bytes | u8 rank | u32 extents[rank] | f32 data
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename U>
void write_raw(std::ostream& os, const U& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_raw(std::istream& is, const std::string& path) {
  U v;
  is.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!is) throw CheckpointError(path + ": truncated checkpoint");
  return v;
}

}  // namespace detail

inline void save_tensors(const std::string& path,
                         const std::map<std::string, Tensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError(path + ": cannot open for writing");
  os.write("SDQN", 4);
  detail::write_raw(os, kCheckpointVersion);
  detail::write_raw(os, std::uint32_t(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::write_raw(os, std::uint16_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    detail::write_raw(os, std::uint8_t(t.rank()));
    for (std::size_t e : t.shape) detail::write_raw(os, std::uint32_t(e));
    os.write(reinterpret_cast<const char*>(t.data.data()),
             std::streamsize(t.numel() * sizeof(float)));
  }
  if (!os) throw CheckpointError(path + ": write failed");
}

inline std::map<std::string, Tensor> load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(path + ": cannot open");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SDQN", 4) != 0)
    throw CheckpointError(path + ": bad magic, not an SDQN checkpoint");
  const auto version = detail::read_raw<std::uint32_t>(is, path);
  if (version != kCheckpointVersion)
    throw CheckpointError(path + ": unsupported format version " + std::to_string(version));
  const auto count = detail::read_raw<std::uint32_t>(is, path);
  std::map<std::string, Tensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_raw<std::uint16_t>(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rank = detail::read_raw<std::uint8_t>(is, path);
    Shape shape(rank);
    for (auto& e : shape) e = detail::read_raw<std::uint32_t>(is, path);
    Tensor t{shape};
    is.read(reinterpret_cast<char*>(t.data.data()),
            std::streamsize(t.numel() * sizeof(float)));
    if (!is) throw CheckpointError(path + ": truncated tensor data for '" + name + "'");
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

// The rng seed recorded at init rides along as a bit-punned extra tensor so
// the file format stays pure "named tensors".
inline constexpr const char* kSeedTensorName = "__rng_seed__";

inline Tensor seed_to_tensor(std::uint64_t seed) {
  Tensor t({2});
  std::uint32_t lo = std::uint32_t(seed & 0xFFFFFFFFu), hi = std::uint32_t(seed >> 32);
  std::memcpy(&t.data[0], &lo, 4);
  std::memcpy(&t.data[1], &hi, 4);
  return t;
}

inline std::uint64_t seed_from_tensor(const Tensor& t) {
  std::uint32_t lo, hi;
  std::memcpy(&lo, &t.data[0], 4);
  std::memcpy(&hi, &t.data[1], 4);
  return (std::uint64_t(hi) << 32) | lo;
}

inline void save_network(const std::string& path, const Network& net,
                         const std::map<std::string, Tensor>& extra = {}) {
  std::map<std::string, Tensor> tensors = net.weights;
  tensors.emplace(kSeedTensorName, seed_to_tensor(net.rng_seed));
  for (const auto& [k, v] : extra) tensors.emplace(k, v);
  save_tensors(path, tensors);
}

/// Fills the weights of an already-built net (architecture comes from the
/// builder; the file carries data only). Missing or mis-shaped tensors are
/// checkpoint errors.
inline std::map<std::string, Tensor> load_network(const std::string& path, Network& net) {
  auto tensors = load_tensors(path);
  for (auto& [key, w] : net.weights) {
    auto it = tensors.find(key);
    if (it == tensors.end())
      throw CheckpointError(path + ": missing tensor '" + key + "'");
    if (it->second.shape != w.shape)
      throw CheckpointError(path + ": tensor '" + key + "' has shape " +
                            shape_str(it->second.shape) + ", expected " + shape_str(w.shape));
    w = it->second;
    tensors.erase(it);
  }
  if (auto it = tensors.find(kSeedTensorName); it != tensors.end()) {
    net.rng_seed = seed_from_tensor(it->second);
    tensors.erase(it);
  }
  ++net.version;
  return tensors;  // leftover side-band tensors (normalization stats etc.)
}

}  // namespace sdqn
