#include "samcl/thermal.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "samcl/errors.hpp"

namespace samcl {

namespace {

constexpr uint32_t kThrmVersion = 1;
constexpr uint32_t kMaxDim = 1u << 20;
constexpr uint64_t kMaxPixels = 1ull << 26;

uint32_t read_u32(std::ifstream& is, size_t& off, const char* what) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (is.gcount() != 4) throw FormatError(std::string("THRM: truncated ") + what, off);
  off += 4;
  return v;
}

// PGM header token reader; skips whitespace and # comments.
int read_pnm_int(std::ifstream& is, const char* what) {
  int c = is.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#')
      while (c != EOF && c != '\n') c = is.get();
    c = is.get();
  }
  if (c == EOF || !std::isdigit(c))
    throw FormatError(std::string("PGM: expected ") + what,
                      static_cast<size_t>(std::max<std::streamoff>(0, is.tellg())));
  long v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    if (v > std::numeric_limits<int>::max()) throw FormatError("PGM: value overflow", 0);
    c = is.get();
  }
  return static_cast<int>(v);
}

}  // namespace

ThermalImage load_thermal(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("THRM: cannot open: " + path, 0);
  char magic[4] = {};
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, "THRM", 4) != 0)
    throw FormatError("THRM: bad magic", 0);
  size_t off = 4;
  const uint32_t version = read_u32(is, off, "version");
  if (version != kThrmVersion)
    throw FormatError("THRM: unsupported version " + std::to_string(version), 4);
  const size_t h_off = off;
  const uint32_t h = read_u32(is, off, "height");
  const size_t w_off = off;
  const uint32_t w = read_u32(is, off, "width");
  if (h == 0 || h > kMaxDim) throw FormatError("THRM: height out of range", h_off);
  if (w == 0 || w > kMaxDim) throw FormatError("THRM: width out of range", w_off);
  if (static_cast<uint64_t>(h) * w > kMaxPixels)
    throw FormatError("THRM: dimension overflow", w_off);

  ThermalImage img(static_cast<int>(h), static_cast<int>(w));
  std::vector<float> payload(static_cast<size_t>(h) * w);
  is.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (is.gcount() != static_cast<std::streamsize>(payload.size() * sizeof(float)))
    throw FormatError("THRM: truncated payload", off + static_cast<size_t>(is.gcount()));
  for (size_t i = 0; i < payload.size(); ++i) {
    const double v = payload[i];
    if (!std::isfinite(v) || v <= kMinPlausibleCelsius || v >= kMaxPlausibleCelsius)
      throw FormatError("THRM: implausible temperature " + std::to_string(v),
                        off + i * sizeof(float));
    img.values[i] = v;
  }
  return img;
}

void save_thermal(const std::string& path, const ThermalImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("THRM: cannot open for write: " + path, 0);
  os.write("THRM", 4);
  const uint32_t version = kThrmVersion;
  const uint32_t h = static_cast<uint32_t>(img.height);
  const uint32_t w = static_cast<uint32_t>(img.width);
  os.write(reinterpret_cast<const char*>(&version), 4);
  os.write(reinterpret_cast<const char*>(&h), 4);
  os.write(reinterpret_cast<const char*>(&w), 4);
  std::vector<float> payload(img.values.size());
  for (size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(img.values[i]);
  os.write(reinterpret_cast<const char*>(payload.data()),
           static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!os) throw FormatError("THRM: write failed: " + path, 0);
}

LabelMask load_mask_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("PGM: cannot open: " + path, 0);
  char p = static_cast<char>(is.get());
  char five = static_cast<char>(is.get());
  if (p != 'P' || five != '5') throw FormatError("PGM: bad magic (want P5)", 0);
  const int w = read_pnm_int(is, "width");
  const int h = read_pnm_int(is, "height");
  const int maxval = read_pnm_int(is, "maxval");
  if (w <= 0 || h <= 0 || static_cast<int64_t>(w) * h > static_cast<int64_t>(kMaxPixels))
    throw FormatError("PGM: dimension overflow", 2);
  if (maxval <= 0 || maxval > 255) throw FormatError("PGM: mask maxval must be <= 255", 2);
  LabelMask mask(h, w);
  is.read(reinterpret_cast<char*>(mask.classes.data()),
          static_cast<std::streamsize>(mask.classes.size()));
  if (is.gcount() != static_cast<std::streamsize>(mask.classes.size()))
    throw FormatError("PGM: truncated payload",
                      static_cast<size_t>(std::max<std::streamoff>(0, is.tellg())));
  return mask;
}

void save_mask_pgm(const std::string& path, const LabelMask& mask) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("PGM: cannot open for write: " + path, 0);
  os << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(mask.classes.data()),
           static_cast<std::streamsize>(mask.classes.size()));
  if (!os) throw FormatError("PGM: write failed: " + path, 0);
}

void save_preview_pgm16(const std::string& path, const ThermalImage& normalized) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("PGM: cannot open for write: " + path, 0);
  os << "P5\n" << normalized.width << " " << normalized.height << "\n65535\n";
  std::vector<uint8_t> bytes;
  bytes.reserve(normalized.values.size() * 2);
  for (double v : normalized.values) {
    const double clamped = std::min(1.0, std::max(0.0, v));
    const auto q = static_cast<uint16_t>(std::lround(clamped * 65535.0));
    bytes.push_back(static_cast<uint8_t>(q >> 8));  // MSB first per the format
    bytes.push_back(static_cast<uint8_t>(q & 0xff));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("PGM: write failed: " + path, 0);
}

ThermalImage normalize_min_max(const ThermalImage& img) {
  if (img.values.empty()) throw ContractError("normalize_min_max: empty image");
  double lo = img.values[0], hi = img.values[0];
  for (double v : img.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo))
    throw ContractError("normalize_min_max: degenerate range, max == min == " +
                        std::to_string(lo));
  ThermalImage out(img.height, img.width);
  const double inv = 1.0 / (hi - lo);
  for (size_t i = 0; i < img.values.size(); ++i) out.values[i] = (img.values[i] - lo) * inv;
  return out;
}

Histogram compute_histogram(const ThermalImage& img, int bins, double lo, double hi) {
  if (bins < 1) throw ContractError("compute_histogram: bins must be >= 1");
  if (!(hi > lo)) throw ContractError("compute_histogram: hi must exceed lo");
  Histogram hist;
  hist.lo = lo;
  hist.hi = hi;
  hist.counts.assign(static_cast<size_t>(bins), 0);
  const double scale = bins / (hi - lo);
  for (double v : img.values) {
    int b = static_cast<int>((v - lo) * scale);
    if (v >= hi) b = bins - 1;  // close the last bin
    if (v < lo) b = 0;
    b = std::min(std::max(b, 0), bins - 1);
    hist.counts[static_cast<size_t>(b)] += 1;
  }
  return hist;
}

}  // namespace samcl
