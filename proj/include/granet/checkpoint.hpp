#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "granet/nn.hpp"

namespace granet {

/// Checkpoint format: magic "GRNT", u32 version, then per parameter (sorted by name):
/// u32 name length, name bytes, u32 ndim, u64 dims, f64 values. Little-endian throughout.
namespace ckpt {

constexpr char kMagic[4] = {'G', 'R', 'N', 'T'};
constexpr std::uint32_t kVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), 4);
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), 8);
}
inline void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(os, bits);
}

inline bool read_u32(std::istream& is, std::uint32_t& v) {
  unsigned char buf[4];
  if (!is.read(reinterpret_cast<char*>(buf), 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return true;
}
inline bool read_u64(std::istream& is, std::uint64_t& v) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return true;
}
inline bool read_f64(std::istream& is, double& v) {
  std::uint64_t bits;
  if (!read_u64(is, bits)) return false;
  std::memcpy(&v, &bits, 8);
  return true;
}

}  // namespace detail

inline void save(const ParameterStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, 4);
  detail::write_u32(os, kVersion);
  detail::write_u64(os, store.count());
  for (const auto& [name, t] : store) {  // std::map iterates sorted by name
    detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) detail::write_u64(os, d);
    for (double v : t.values) detail::write_f64(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

inline ParameterStore load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic bytes in " + path);
  std::uint32_t version = 0;
  if (!detail::read_u32(is, version))
    throw std::runtime_error("checkpoint: truncated header in " + path);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(version) + " in " + path);
  std::uint64_t count = 0;
  if (!detail::read_u64(is, count))
    throw std::runtime_error("checkpoint: truncated header in " + path);
  ParameterStore store;
  for (std::uint64_t r = 0; r < count; ++r) {
    std::uint32_t name_len = 0;
    if (!detail::read_u32(is, name_len))
      throw std::runtime_error("checkpoint: truncated record in " + path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw std::runtime_error("checkpoint: truncated record in " + path);
    std::uint32_t ndim = 0;
    if (!detail::read_u32(is, ndim))
      throw std::runtime_error("checkpoint: truncated record in " + path);
    std::vector<std::size_t> shape(ndim);
    std::size_t total = 1;
    for (auto& d : shape) {
      std::uint64_t v = 0;
      if (!detail::read_u64(is, v))
        throw std::runtime_error("checkpoint: truncated record in " + path);
      d = static_cast<std::size_t>(v);
      total *= d;
    }
    std::vector<double> values(total);
    for (auto& v : values)
      if (!detail::read_f64(is, v))
        throw std::runtime_error("checkpoint: truncated values for " + name + " in " + path);
    store.add(name, Tensor(std::move(shape), std::move(values)));
  }
  return store;
}

}  // namespace ckpt
}  // namespace granet
