#include "samcl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "samcl/errors.hpp"

namespace samcl {

namespace {

// This code targets little-endian hosts; writes are raw memory dumps.
static_assert(sizeof(double) == 8);

void put_u32(std::ofstream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t get_u32(std::ifstream& is, size_t& off, const char* what) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (is.gcount() != 4) throw FormatError(std::string("checkpoint: truncated ") + what, off);
  off += 4;
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& named) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("checkpoint: cannot open for write: " + path, 0);
  os.write("SCKP", 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<uint32_t>(named.size()));
  for (const auto& [name, tensor] : named) {
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const auto& shape = tensor.shape();
    put_u32(os, static_cast<uint32_t>(shape.size()));
    for (int d : shape) put_u32(os, static_cast<uint32_t>(d));
    auto vals = tensor.values();
    os.write(reinterpret_cast<const char*>(vals.data()),
             static_cast<std::streamsize>(vals.size() * sizeof(double)));
  }
  if (!os) throw FormatError("checkpoint: write failed: " + path, 0);
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("checkpoint: cannot open: " + path, 0);
  size_t off = 0;
  char magic[4] = {};
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, "SCKP", 4) != 0)
    throw FormatError("checkpoint: bad magic", 0);
  off = 4;
  const uint32_t version = get_u32(is, off, "version");
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version), 4);
  const uint32_t count = get_u32(is, off, "entry count");
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (uint32_t e = 0; e < count; ++e) {
    CheckpointEntry entry;
    const uint32_t name_len = get_u32(is, off, "name length");
    if (name_len > (1u << 20)) throw FormatError("checkpoint: name length overflow", off - 4);
    entry.name.resize(name_len);
    is.read(entry.name.data(), name_len);
    if (is.gcount() != static_cast<std::streamsize>(name_len))
      throw FormatError("checkpoint: truncated name", off);
    off += name_len;
    const uint32_t rank = get_u32(is, off, "rank");
    if (rank > 8) throw FormatError("checkpoint: rank overflow", off - 4);
    uint64_t numel = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      const uint32_t d = get_u32(is, off, "dimension");
      entry.shape.push_back(static_cast<int>(d));
      numel *= d;
      if (numel > (1ull << 32)) throw FormatError("checkpoint: dimension overflow", off - 4);
    }
    entry.data.resize(numel);
    is.read(reinterpret_cast<char*>(entry.data.data()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    if (is.gcount() != static_cast<std::streamsize>(numel * sizeof(double)))
      throw FormatError("checkpoint: truncated payload for '" + entry.name + "'", off);
    off += numel * sizeof(double);
    entries.push_back(std::move(entry));
  }
  return entries;
}

}  // namespace samcl
