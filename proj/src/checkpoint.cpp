#include "vg3d/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace vg3d {

namespace {

constexpr char kMagic[8] = {'V', 'G', '3', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ofstream& out, T v) {
  // Host is little-endian on every supported target; bytes go out as-is.
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint64_t>(out, entries.size());
  for (const auto& [name, entry] : entries) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(entry.shape.size()));
    for (std::size_t d : entry.shape) write_le<std::uint64_t>(out, d);
    if (entry.data.size() != shape_size(entry.shape)) {
      throw std::invalid_argument("checkpoint: entry " + name + " has " +
                                  std::to_string(entry.data.size()) + " values for shape " +
                                  shape_str(entry.shape));
    }
    out.write(reinterpret_cast<const char*>(entry.data.data()),
              static_cast<std::streamsize>(entry.data.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const auto version = read_le<std::uint32_t>(in);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = read_le<std::uint64_t>(in);
  Checkpoint entries;
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto name_len = read_le<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = read_le<std::uint32_t>(in);
    CheckpointEntry entry;
    entry.shape.resize(rank);
    for (auto& d : entry.shape) d = read_le<std::uint64_t>(in);
    entry.data.resize(shape_size(entry.shape));
    in.read(reinterpret_cast<char*>(entry.data.data()),
            static_cast<std::streamsize>(entry.data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated entry " + name);
    entries.emplace(std::move(name), std::move(entry));
  }
  return entries;
}

}  // namespace vg3d
