#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "samcl/rng.hpp"
#include "samcl/thermal.hpp"

namespace samcl::data {

// Class layout used throughout: 0 background, 1 chin, 2 mouth, 3 nose,
// 4 eyes, 5 eyebrows.
inline constexpr int kNumFaceClasses = 6;
inline constexpr uint8_t kBackground = 0;
inline constexpr uint8_t kChin = 1;
inline constexpr uint8_t kMouth = 2;
inline constexpr uint8_t kNose = 3;
inline constexpr uint8_t kEyes = 4;
inline constexpr uint8_t kEyebrows = 5;

struct LandmarkSet {
  std::vector<std::pair<double, double>> points;  // exactly 68 (x, y) pairs
  std::string subject_id;
  std::string frame_id;
};

// One closed boundary: the landmark indices tracing it, painted into `class_id`.
// Boundaries are rasterized in list order, so later entries overwrite earlier
// ones on overlap. A class may contribute several boundaries (eyes, eyebrows).
struct RegionBoundary {
  uint8_t class_id = 0;
  std::string name;
  std::vector<int> landmark_indices;
};
using RegionDefinition = std::vector<RegionBoundary>;

// Standard 68-point grouping: jawline object as the chin area, outer lips,
// nose bridge+base, eye hexagons, brow arcs. Paint order encodes the priority
// chin < mouth < nose < eyebrows < eyes.
RegionDefinition default_face_regions();

// Even-odd scanline fill of each boundary at pixel centers (x+0.5, y+0.5).
LabelMask landmarks_to_mask(const LandmarkSet& lm, const RegionDefinition& regions, int height,
                            int width);

// Landmark text file: 68 lines of "x y".
LandmarkSet load_landmarks(const std::string& path, std::string subject_id = "",
                           std::string frame_id = "");

struct DatasetEntry {
  std::string image_path;
  std::string mask_path;
  std::string subject_id;
};

struct DatasetIndex {
  std::vector<DatasetEntry> entries;
};

// Subjects are partitioned (never split across sets); the fraction applies to
// the subject count, rounding toward train.
std::pair<DatasetIndex, DatasetIndex> split_by_subject(const DatasetIndex& index,
                                                       double train_fraction, Rng& rng);

// JSON manifest {"entries": [{"image":..., "mask":..., "subject":...}]}.
// Relative paths resolve against the manifest's directory; they must exist.
DatasetIndex load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetIndex& index);

// Procedural stand-in for a controlled-setting thermal face dataset: a warm
// elliptical face over a cooler background, with labeled sub-regions. The
// resulting temperature histogram is bimodal by construction.
struct SyntheticFaceConfig {
  int height = 64;
  int width = 64;
  double bg_temp_min = 20.0;
  double bg_temp_max = 24.0;
  double face_temp_min = 33.0;
  double face_temp_max = 36.0;
  // region temperature offsets relative to the face base (degrees C)
  double chin_offset = -0.7;
  double mouth_offset = 1.1;
  double nose_offset = -1.4;
  double eye_offset = 1.6;
  double brow_offset = -2.0;
  double geometry_jitter = 0.05;  // fractional jitter on region placement
  int num_subjects = 10;

  void validate() const;  // face range strictly above background range
};

// Per-subject appearance drawn once, so frames of a subject share identity.
struct SubjectParams {
  double center_x_frac, center_y_frac;
  double axis_x_frac, axis_y_frac;
  double face_base_temp;
  double bg_base_temp;
  double bg_gradient_x, bg_gradient_y;
  double region_scale;
};

SubjectParams sample_subject(const SyntheticFaceConfig& cfg, Rng& rng);
std::pair<ThermalImage, LabelMask> synth_face_frame(const SyntheticFaceConfig& cfg,
                                                    const SubjectParams& subject, Rng& frame_rng);
// Convenience: subject and frame drawn from the same stream.
std::pair<ThermalImage, LabelMask> synth_face(const SyntheticFaceConfig& cfg, Rng& rng);

}  // namespace samcl::data
