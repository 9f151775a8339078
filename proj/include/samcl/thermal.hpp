#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace samcl {

// Raw thermal frame: absolute temperature in degrees C per pixel, row-major.
struct ThermalImage {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  ThermalImage() = default;
  ThermalImage(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<size_t>(h) * w, fill) {}

  double& at(int y, int x) { return values[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
  int64_t pixel_count() const { return static_cast<int64_t>(height) * width; }
};

// Per-pixel class indices.
struct LabelMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> classes;

  LabelMask() = default;
  LabelMask(int h, int w, uint8_t fill = 0)
      : height(h), width(w), classes(static_cast<size_t>(h) * w, fill) {}

  uint8_t& at(int y, int x) { return classes[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const { return classes[static_cast<size_t>(y) * width + x]; }
  int64_t pixel_count() const { return static_cast<int64_t>(height) * width; }

  bool operator==(const LabelMask&) const = default;
};

// Boolean map of pixels replaced by synthesized objects.
struct OcclusionMap {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> occluded;

  OcclusionMap() = default;
  OcclusionMap(int h, int w) : height(h), width(w), occluded(static_cast<size_t>(h) * w, 0) {}

  uint8_t& at(int y, int x) { return occluded[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const { return occluded[static_cast<size_t>(y) * width + x]; }

  bool operator==(const OcclusionMap&) const = default;
};

// Sanity bound enforced when loading raw thermal files.
inline constexpr double kMinPlausibleCelsius = -40.0;
inline constexpr double kMaxPlausibleCelsius = 120.0;

// THRM container: magic "THRM", version u32, height u32, width u32, then
// height*width little-endian f32 values (degrees C), row-major.
ThermalImage load_thermal(const std::string& path);
void save_thermal(const std::string& path, const ThermalImage& img);

// 8-bit binary PGM (P5) of class indices.
LabelMask load_mask_pgm(const std::string& path);
void save_mask_pgm(const std::string& path, const LabelMask& mask);

// 16-bit binary PGM (P5, big-endian samples per the format) mapping [0,1]
// linearly onto [0,65535]; used for augmentation previews.
void save_preview_pgm16(const std::string& path, const ThermalImage& normalized);

// (v - min) / (max - min) per pixel. Requires max > min.
ThermalImage normalize_min_max(const ThermalImage& img);

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;  // bin b covers [lo + b*w, lo + (b+1)*w), last bin closed
  std::vector<int64_t> counts;
};

Histogram compute_histogram(const ThermalImage& img, int bins, double lo, double hi);

}  // namespace samcl
