#pragma once

// Versioned binary checkpoint container, little-endian, 32-bit values.
//
// Layout (all integers little-endian):
//   8 bytes  magic "PLENSCK1"
//   u32      format version (1)
//   u64      config hash (FNV-1a of the producer's canonical config string)
//   u64      optimizer step count (max across stores)
//   u32      metadata length, then that many bytes (UTF-8 JSON; producer-defined)
//   u32      parameter count
//   per parameter (sorted by name):
//     u32 name length, name bytes
//     u32 rows, u32 cols
//     f32 values [rows*cols]
//     u8  has_moments; if 1: f32 m[rows*cols], f32 v[rows*cols]
//   per store: u64 step (one per store, in the order given)
//
// A file may span several parameter stores (e.g. adversarially trained parts
// keep separate optimizer state); names must be unique across them. Float
// stores round-trip bit-exactly.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "plens/nn.hpp"

namespace plens {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace detail {

inline constexpr char kCkptMagic[8] = {'P', 'L', 'E', 'N', 'S', 'C', 'K', '1'};
inline constexpr std::uint32_t kCkptVersion = 1;

template <class T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ValidationError("truncated checkpoint: " + path);
  return v;
}

inline void write_f32s(std::ostream& out, const std::vector<float>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

inline std::vector<float> read_f32s(std::istream& in, std::size_t n, const std::string& path) {
  std::vector<float> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw ValidationError("truncated checkpoint: " + path);
  return v;
}

}  // namespace detail

struct CheckpointHeader {
  std::uint64_t config_hash = 0;
  std::uint64_t step = 0;
  std::string metadata;
};

inline void save_checkpoint(const std::vector<const ParameterStore<float>*>& stores,
                            const std::string& path, std::uint64_t config_hash,
                            const std::string& metadata = "") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write checkpoint: " + path);
  out.write(detail::kCkptMagic, 8);
  detail::write_pod<std::uint32_t>(out, detail::kCkptVersion);
  detail::write_pod<std::uint64_t>(out, config_hash);
  std::uint64_t step = 0;
  std::size_t n_params = 0;
  for (const auto* ps : stores) {
    step = std::max(step, ps->step);
    n_params += ps->entries().size();
  }
  detail::write_pod<std::uint64_t>(out, step);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(metadata.size()));
  out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(n_params));
  for (const auto* ps : stores) {
    for (const auto& [name, e] : ps->entries()) {
      detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.t.rows()));
      detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.t.cols()));
      detail::write_f32s(out, e.t.values());
      const bool has_moments = !e.m.empty();
      detail::write_pod<std::uint8_t>(out, has_moments ? 1 : 0);
      if (has_moments) {
        detail::write_f32s(out, e.m);
        detail::write_f32s(out, e.v);
      }
    }
  }
  for (const auto* ps : stores) detail::write_pod<std::uint64_t>(out, ps->step);
  if (!out) throw RuntimeFailure("write failure on checkpoint: " + path);
}

/// Loads values and moments into already-built stores (any file parameter must
/// belong to exactly one store); names and shapes must match the file exactly.
inline CheckpointHeader load_checkpoint(const std::vector<ParameterStore<float>*>& stores,
                                        const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    throw ValidationError("not a checkpoint file: " + path);
  const auto version = detail::read_pod<std::uint32_t>(in, path);
  if (version != detail::kCkptVersion)
    throw ValidationError("unsupported checkpoint version in " + path);
  CheckpointHeader hdr;
  hdr.config_hash = detail::read_pod<std::uint64_t>(in, path);
  hdr.step = detail::read_pod<std::uint64_t>(in, path);
  const auto meta_len = detail::read_pod<std::uint32_t>(in, path);
  hdr.metadata.resize(meta_len);
  in.read(hdr.metadata.data(), meta_len);
  if (!in) throw ValidationError("truncated checkpoint: " + path);
  const auto n_params = detail::read_pod<std::uint32_t>(in, path);
  std::size_t expected = 0;
  for (const auto* ps : stores) expected += ps->entries().size();
  if (n_params != expected)
    throw ValidationError("checkpoint parameter count mismatch in " + path);
  for (std::uint32_t p = 0; p < n_params; ++p) {
    const auto name_len = detail::read_pod<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw ValidationError("truncated checkpoint: " + path);
    const auto rows = detail::read_pod<std::uint32_t>(in, path);
    const auto cols = detail::read_pod<std::uint32_t>(in, path);
    ParameterStore<float>* owner = nullptr;
    for (auto* ps : stores)
      if (ps->has(name)) owner = ps;
    if (!owner) throw ValidationError("checkpoint has unknown parameter " + name);
    auto& entry = owner->entries().at(name);
    if (entry.t.rows() != rows || entry.t.cols() != cols)
      throw ValidationError("checkpoint shape mismatch for " + name);
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    owner->assign_values(name, detail::read_f32s(in, n, path));
    const auto has_moments = detail::read_pod<std::uint8_t>(in, path);
    if (has_moments) {
      entry.m = detail::read_f32s(in, n, path);
      entry.v = detail::read_f32s(in, n, path);
    } else {
      entry.m.clear();
      entry.v.clear();
    }
  }
  for (auto* ps : stores) ps->step = detail::read_pod<std::uint64_t>(in, path);
  return hdr;
}

/// Reads just the header (for config recovery and manifest hashing).
inline CheckpointHeader peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    throw ValidationError("not a checkpoint file: " + path);
  const auto version = detail::read_pod<std::uint32_t>(in, path);
  if (version != detail::kCkptVersion)
    throw ValidationError("unsupported checkpoint version in " + path);
  CheckpointHeader hdr;
  hdr.config_hash = detail::read_pod<std::uint64_t>(in, path);
  hdr.step = detail::read_pod<std::uint64_t>(in, path);
  const auto meta_len = detail::read_pod<std::uint32_t>(in, path);
  hdr.metadata.resize(meta_len);
  in.read(hdr.metadata.data(), meta_len);
  if (!in) throw ValidationError("truncated checkpoint: " + path);
  return hdr;
}

}  // namespace plens
