#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "samcl/rng.hpp"
#include "samcl/thermal.hpp"

namespace samcl::tiaug {

enum class ShapeKind { kEllipse, kRectangle, kConvexPolygon, kStrand };

const char* shape_kind_name(ShapeKind kind);
ShapeKind shape_kind_from_name(const std::string& name);

// One synthesized object. Reference temperatures anchor to per-image face and
// background means; `base_temperature` stores the resolved value so a recorded
// sample can be replayed without recomputing statistics.
struct OccluderParams {
  ShapeKind kind = ShapeKind::kEllipse;
  double center_x = 0.0, center_y = 0.0;  // pixels
  double size_frac = 0.1;                 // of min(H, W)
  double orientation = 0.0;               // radians
  double aspect = 1.0;                    // minor/major ratio (ellipse, rectangle)
  bool hot = true;
  double temperature_offset = 0.0;  // degrees C above face mean / below background mean
  double edge_softness = 0.0;       // blend radius in pixels
  double base_temperature = 0.0;    // resolved object temperature in degrees C
  std::vector<std::pair<double, double>> vertices;     // convex polygon, unit frame
  std::vector<std::pair<double, double>> strand_path;  // absolute pixel coords
  double strand_thickness = 0.0;
};

struct GeometricParams {
  bool hflip = false;
  bool vflip = false;
  double rotation_deg = 0.0;
  double rotation_fill = 0.0;  // degrees C painted outside the rotated frame
  bool blur = false;
  double blur_sigma = 0.0;
  bool resize = false;
  double resize_factor = 1.0;
};

struct AugConfig {
  // occluder synthesis
  bool occluders_enabled = true;
  int count_min = 0;
  int count_max = 5;
  double size_min = 0.05;
  double size_max = 0.40;
  bool hot_enabled = true;
  bool cold_enabled = true;
  double hot_offset_min = 2.0;   // degrees C above the face-region mean
  double hot_offset_max = 15.0;
  double cold_offset_min = 2.0;  // degrees C below the background mean
  double cold_offset_max = 15.0;
  double edge_softness_min = 0.0;
  double edge_softness_max = 3.0;
  // additive thermal noise
  bool noise_enabled = true;
  double netd_max = 0.1;  // degrees C, exclusive upper bound
  // geometric transforms
  bool hflip_enabled = true;
  bool vflip_enabled = false;
  bool rotation_enabled = true;
  double rotation_max_deg = 15.0;
  bool blur_enabled = false;
  double blur_sigma_min = 0.5;
  double blur_sigma_max = 1.5;
  bool resize_enabled = false;
  double resize_min = 0.5;
  double resize_max = 2.0;

  void validate() const;
};

// Everything needed to regenerate a sample bit-exactly.
struct AppliedParams {
  GeometricParams geo;
  std::vector<OccluderParams> occluders;
  bool noise_applied = false;
  double netd_max = 0.0;
  uint64_t noise_seed = 0;
};

struct AugSample {
  ThermalImage image;      // min-max normalized to [0,1]
  ThermalImage raw_image;  // degrees C after occlusion and noise, pre-normalization
  LabelMask mask;          // co-transformed by the geometric stage only
  OcclusionMap occlusion_map;
  AppliedParams applied;
};

// ---- geometric primitives (deterministic, parameter-driven) ----
ThermalImage flip_h(const ThermalImage& img);
ThermalImage flip_v(const ThermalImage& img);
LabelMask flip_h(const LabelMask& mask);
LabelMask flip_v(const LabelMask& mask);
ThermalImage rotate_bilinear(const ThermalImage& img, double degrees, double fill);
LabelMask rotate_nearest(const LabelMask& mask, double degrees);
ThermalImage resize_bilinear(const ThermalImage& img, int out_h, int out_w);
LabelMask resize_nearest(const LabelMask& mask, int out_h, int out_w);
ThermalImage gaussian_blur(const ThermalImage& img, double sigma);

// ---- pipeline stages ----

// Means over face (class != 0) and background (class == 0) pixels.
std::pair<double, double> fg_bg_stats(const ThermalImage& img, const LabelMask& mask);

// Samples k objects in [count_min, count_max] and paints them. When both
// regimes are enabled and k >= 2, the first two objects are forced hot then
// cold so both disruptions appear. Object cores sit strictly above the face
// mean or strictly below the background mean of the pre-occlusion image.
std::pair<ThermalImage, OcclusionMap> synth_occluders(const ThermalImage& img,
                                                      const LabelMask& face_mask,
                                                      const AugConfig& cfg, Rng& rng,
                                                      std::vector<OccluderParams>* sampled = nullptr);

// Deterministic renderer used by both synth_occluders and replay.
std::pair<ThermalImage, OcclusionMap> render_occluders(
    const ThermalImage& img, const std::vector<OccluderParams>& occluders);

// i.i.d. uniform noise in [0, netd_max) per pixel.
ThermalImage add_netd_noise(const ThermalImage& img, double netd_max, Rng& rng);

// Samples flips/rotation/blur/resize per the config and applies the same
// spatial transform to image (bilinear) and mask (nearest).
std::pair<ThermalImage, LabelMask> geometric_transform(const ThermalImage& img,
                                                       const LabelMask& mask,
                                                       const AugConfig& cfg, Rng& rng,
                                                       GeometricParams* sampled = nullptr);
std::pair<ThermalImage, LabelMask> apply_geometric(const ThermalImage& img, const LabelMask& mask,
                                                   const GeometricParams& params);

inline ThermalImage min_max_normalize(const ThermalImage& img) { return normalize_min_max(img); }

// Full pipeline: geometric -> occluders -> noise -> normalize.
AugSample augment(const ThermalImage& img, const LabelMask& mask, const AugConfig& cfg, Rng& rng);

// Re-applies recorded parameters; bit-identical to the original sample.
AugSample replay(const ThermalImage& img, const LabelMask& mask, const AppliedParams& applied);

// JSON round-trip for the params sidecar.
std::string applied_params_to_json(const AppliedParams& params);
AppliedParams applied_params_from_json(const std::string& text);

}  // namespace samcl::tiaug
