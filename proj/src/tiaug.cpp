#include "samcl/tiaug.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "samcl/errors.hpp"

namespace samcl::tiaug {

using nlohmann::json;

const char* shape_kind_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kEllipse: return "ellipse";
    case ShapeKind::kRectangle: return "rectangle";
    case ShapeKind::kConvexPolygon: return "convex-polygon";
    case ShapeKind::kStrand: return "strand";
  }
  throw ContractError("shape_kind_name: invalid kind");
}

ShapeKind shape_kind_from_name(const std::string& name) {
  if (name == "ellipse") return ShapeKind::kEllipse;
  if (name == "rectangle") return ShapeKind::kRectangle;
  if (name == "convex-polygon") return ShapeKind::kConvexPolygon;
  if (name == "strand") return ShapeKind::kStrand;
  throw ContractError("shape_kind_from_name: unknown kind '" + name + "'");
}

void AugConfig::validate() const {
  if (count_min < 0 || count_max < count_min)
    throw ContractError("AugConfig: occluder count range empty");
  if (!(size_min > 0.0) || size_max < size_min || size_max >= 1.0)
    throw ContractError("AugConfig: size range must satisfy 0 < min <= max < 1");
  if (occluders_enabled && count_max > 0 && !hot_enabled && !cold_enabled)
    throw ContractError("AugConfig: occluders enabled but both temperature regimes disabled");
  if (hot_enabled && (!(hot_offset_min > 0.0) || hot_offset_max < hot_offset_min))
    throw ContractError("AugConfig: hot offset range must satisfy 0 < min <= max");
  if (cold_enabled && (!(cold_offset_min > 0.0) || cold_offset_max < cold_offset_min))
    throw ContractError("AugConfig: cold offset range must satisfy 0 < min <= max");
  if (edge_softness_min < 0.0 || edge_softness_max < edge_softness_min)
    throw ContractError("AugConfig: edge softness range empty");
  if (noise_enabled && !(netd_max > 0.0))
    throw ContractError("AugConfig: netd_max must be > 0");
  if (rotation_enabled && rotation_max_deg < 0.0)
    throw ContractError("AugConfig: rotation_max_deg must be >= 0");
  if (blur_enabled && (!(blur_sigma_min > 0.0) || blur_sigma_max < blur_sigma_min))
    throw ContractError("AugConfig: blur sigma range must satisfy 0 < min <= max");
  if (resize_enabled &&
      (resize_min < 0.5 || resize_max > 2.0 || resize_max < resize_min))
    throw ContractError("AugConfig: resize range must be within [0.5, 2.0]");
}

// ---- geometric primitives ----

ThermalImage flip_h(const ThermalImage& img) {
  ThermalImage out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(y, x) = img.at(y, img.width - 1 - x);
  return out;
}

ThermalImage flip_v(const ThermalImage& img) {
  ThermalImage out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(y, x) = img.at(img.height - 1 - y, x);
  return out;
}

LabelMask flip_h(const LabelMask& mask) {
  LabelMask out(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) out.at(y, x) = mask.at(y, mask.width - 1 - x);
  return out;
}

LabelMask flip_v(const LabelMask& mask) {
  LabelMask out(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) out.at(y, x) = mask.at(mask.height - 1 - y, x);
  return out;
}

namespace {

// Inverse-maps destination pixel centers through a rotation about the image
// center; angle 0 reproduces the input exactly.
struct RotMap {
  double cx, cy, cosr, sinr;
  RotMap(int h, int w, double degrees)
      : cx(w / 2.0),
        cy(h / 2.0),
        cosr(std::cos(-degrees * std::numbers::pi / 180.0)),
        sinr(std::sin(-degrees * std::numbers::pi / 180.0)) {}
  void map(double x, double y, double& sx, double& sy) const {
    const double dx = x - cx, dy = y - cy;
    sx = cx + cosr * dx - sinr * dy;
    sy = cy + sinr * dx + cosr * dy;
  }
};

}  // namespace

ThermalImage rotate_bilinear(const ThermalImage& img, double degrees, double fill) {
  ThermalImage out(img.height, img.width);
  const RotMap rot(img.height, img.width, degrees);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double sx, sy;
      rot.map(x + 0.5, y + 0.5, sx, sy);
      const double u = sx - 0.5, v = sy - 0.5;
      if (u < 0.0 || u > img.width - 1 || v < 0.0 || v > img.height - 1) {
        out.at(y, x) = fill;
        continue;
      }
      const int x0 = static_cast<int>(u);
      const int y0 = static_cast<int>(v);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const int y1 = std::min(y0 + 1, img.height - 1);
      const double fx = u - x0, fy = v - y0;
      out.at(y, x) = (1 - fy) * ((1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1)) +
                     fy * ((1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1));
    }
  return out;
}

LabelMask rotate_nearest(const LabelMask& mask, double degrees) {
  LabelMask out(mask.height, mask.width, 0);
  const RotMap rot(mask.height, mask.width, degrees);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      double sx, sy;
      rot.map(x + 0.5, y + 0.5, sx, sy);
      const int xi = static_cast<int>(std::lround(sx - 0.5));
      const int yi = static_cast<int>(std::lround(sy - 0.5));
      if (xi >= 0 && xi < mask.width && yi >= 0 && yi < mask.height) out.at(y, x) = mask.at(yi, xi);
    }
  return out;
}

ThermalImage resize_bilinear(const ThermalImage& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ContractError("resize_bilinear: empty output");
  ThermalImage out(out_h, out_w);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const double u = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const double v = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
      const int x0 = static_cast<int>(u);
      const int y0 = static_cast<int>(v);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const int y1 = std::min(y0 + 1, img.height - 1);
      const double fx = u - x0, fy = v - y0;
      out.at(y, x) = (1 - fy) * ((1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1)) +
                     fy * ((1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1));
    }
  return out;
}

LabelMask resize_nearest(const LabelMask& mask, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ContractError("resize_nearest: empty output");
  LabelMask out(out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const int yi = std::min(static_cast<int>((y + 0.5) * mask.height / out_h), mask.height - 1);
      const int xi = std::min(static_cast<int>((x + 0.5) * mask.width / out_w), mask.width - 1);
      out.at(y, x) = mask.at(yi, xi);
    }
  return out;
}

ThermalImage gaussian_blur(const ThermalImage& img, double sigma) {
  if (!(sigma > 0.0)) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += kernel[static_cast<size_t>(i + radius)];
  }
  for (auto& k : kernel) k /= norm;
  ThermalImage tmp(img.height, img.width), out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<size_t>(i + radius)] *
               img.at(y, std::clamp(x + i, 0, img.width - 1));
      tmp.at(y, x) = acc;
    }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<size_t>(i + radius)] *
               tmp.at(std::clamp(y + i, 0, img.height - 1), x);
      out.at(y, x) = acc;
    }
  return out;
}

// ---- statistics ----

std::pair<double, double> fg_bg_stats(const ThermalImage& img, const LabelMask& mask) {
  if (img.height != mask.height || img.width != mask.width)
    throw ContractError("fg_bg_stats: image and mask dims differ");
  double fg = 0.0, bg = 0.0;
  int64_t nfg = 0, nbg = 0;
  for (size_t i = 0; i < img.values.size(); ++i) {
    if (mask.classes[i] != 0) {
      fg += img.values[i];
      ++nfg;
    } else {
      bg += img.values[i];
      ++nbg;
    }
  }
  if (nfg == 0) throw StatsError("fg_bg_stats: face region is empty");
  if (nbg == 0) throw StatsError("fg_bg_stats: background region is empty");
  return {fg / static_cast<double>(nfg), bg / static_cast<double>(nbg)};
}

// ---- occluder synthesis ----

namespace {

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

// Signed distance to the object boundary, negative inside. Approximate for
// ellipses and polygon corners, which is sufficient for alpha blending.
double occluder_sdf(const OccluderParams& o, double px, double py, double half_size) {
  const double cosr = std::cos(o.orientation), sinr = std::sin(o.orientation);
  const double dx = px - o.center_x, dy = py - o.center_y;
  const double lx = cosr * dx + sinr * dy;
  const double ly = -sinr * dx + cosr * dy;
  switch (o.kind) {
    case ShapeKind::kEllipse: {
      const double a = half_size, b = std::max(half_size * o.aspect, 0.5);
      const double r = std::sqrt((lx / a) * (lx / a) + (ly / b) * (ly / b));
      return (r - 1.0) * std::min(a, b);
    }
    case ShapeKind::kRectangle: {
      const double a = half_size, b = std::max(half_size * o.aspect, 0.5);
      const double qx = std::abs(lx) - a, qy = std::abs(ly) - b;
      const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
      return std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0);
    }
    case ShapeKind::kConvexPolygon: {
      double d = -1e30;
      const size_t n = o.vertices.size();
      for (size_t i = 0; i < n; ++i) {
        const auto& [x1, y1] = o.vertices[i];
        const auto& [x2, y2] = o.vertices[(i + 1) % n];
        // outward normal of a counter-clockwise edge
        const double ex = x2 - x1, ey = y2 - y1;
        const double elen = std::sqrt(ex * ex + ey * ey);
        if (elen == 0.0) continue;
        const double nx = ey / elen, ny = -ex / elen;
        d = std::max(d, (lx / half_size - x1) * nx * half_size +
                            (ly / half_size - y1) * ny * half_size);
      }
      return d;
    }
    case ShapeKind::kStrand: {
      double best = 1e30;
      for (size_t i = 0; i + 1 < o.strand_path.size(); ++i)
        best = std::min(best, segment_distance(px, py, o.strand_path[i].first,
                                               o.strand_path[i].second,
                                               o.strand_path[i + 1].first,
                                               o.strand_path[i + 1].second));
      return best - o.strand_thickness;
    }
  }
  return 1e30;
}

void occluder_bbox(const OccluderParams& o, double half_size, int h, int w, int& x0, int& y0,
                   int& x1, int& y1) {
  double margin = o.edge_softness + 2.0;
  double lo_x, hi_x, lo_y, hi_y;
  if (o.kind == ShapeKind::kStrand) {
    lo_x = hi_x = o.strand_path.empty() ? o.center_x : o.strand_path[0].first;
    lo_y = hi_y = o.strand_path.empty() ? o.center_y : o.strand_path[0].second;
    for (const auto& [px, py] : o.strand_path) {
      lo_x = std::min(lo_x, px);
      hi_x = std::max(hi_x, px);
      lo_y = std::min(lo_y, py);
      hi_y = std::max(hi_y, py);
    }
    margin += o.strand_thickness;
  } else {
    lo_x = o.center_x - half_size;
    hi_x = o.center_x + half_size;
    lo_y = o.center_y - half_size;
    hi_y = o.center_y + half_size;
  }
  x0 = std::max(0, static_cast<int>(std::floor(lo_x - margin)));
  y0 = std::max(0, static_cast<int>(std::floor(lo_y - margin)));
  x1 = std::min(w - 1, static_cast<int>(std::ceil(hi_x + margin)));
  y1 = std::min(h - 1, static_cast<int>(std::ceil(hi_y + margin)));
}

std::vector<std::pair<double, double>> convex_hull(
    std::vector<std::pair<double, double>> pts) {
  std::sort(pts.begin(), pts.end());
  auto cross = [](const auto& o, const auto& a, const auto& b) {
    return (a.first - o.first) * (b.second - o.second) -
           (a.second - o.second) * (b.first - o.first);
  };
  std::vector<std::pair<double, double>> hull;
  for (const auto& p : pts) {  // lower
    while (hull.size() >= 2 && cross(hull[hull.size() - 2], hull.back(), p) <= 0)
      hull.pop_back();
    hull.push_back(p);
  }
  const size_t lower = hull.size() + 1;
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {  // upper
    while (hull.size() >= lower && cross(hull[hull.size() - 2], hull.back(), *it) <= 0)
      hull.pop_back();
    hull.push_back(*it);
  }
  hull.pop_back();
  return hull;  // counter-clockwise
}

}  // namespace

std::pair<ThermalImage, OcclusionMap> render_occluders(
    const ThermalImage& img, const std::vector<OccluderParams>& occluders) {
  ThermalImage out = img;
  OcclusionMap occ(img.height, img.width);
  const double min_hw = std::min(img.height, img.width);
  for (const auto& o : occluders) {
    const double half_size = 0.5 * o.size_frac * min_hw;
    int x0, y0, x1, y1;
    occluder_bbox(o, half_size, img.height, img.width, x0, y0, x1, y1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double d = occluder_sdf(o, x + 0.5, y + 0.5, half_size);
        double alpha;
        if (o.edge_softness > 0.0)
          alpha = std::clamp(0.5 - d / o.edge_softness, 0.0, 1.0);
        else
          alpha = d < 0.0 ? 1.0 : 0.0;
        if (alpha <= 0.0) continue;
        out.at(y, x) = alpha * o.base_temperature + (1.0 - alpha) * out.at(y, x);
        if (alpha > 0.5) occ.at(y, x) = 1;
      }
  }
  return {std::move(out), std::move(occ)};
}

std::pair<ThermalImage, OcclusionMap> synth_occluders(const ThermalImage& img,
                                                      const LabelMask& face_mask,
                                                      const AugConfig& cfg, Rng& rng,
                                                      std::vector<OccluderParams>* sampled) {
  cfg.validate();
  if (img.height != face_mask.height || img.width != face_mask.width)
    throw ContractError("synth_occluders: image and mask dims differ");
  const int k = cfg.occluders_enabled
                    ? static_cast<int>(rng.uniform_int(cfg.count_min, cfg.count_max))
                    : 0;
  std::vector<OccluderParams> occluders;
  if (k > 0) {
    const auto [fg_mean, bg_mean] = fg_bg_stats(img, face_mask);
    const double min_hw = std::min(img.height, img.width);
    for (int i = 0; i < k; ++i) {
      OccluderParams o;
      o.kind = static_cast<ShapeKind>(rng.uniform_int(0, 3));
      if (cfg.hot_enabled && cfg.cold_enabled)
        o.hot = (i == 0) ? true : (i == 1 ? false : rng.coin());
      else
        o.hot = cfg.hot_enabled;
      o.center_x = rng.uniform(0.0, img.width);
      o.center_y = rng.uniform(0.0, img.height);
      o.size_frac = rng.uniform(cfg.size_min, cfg.size_max);
      o.orientation = rng.uniform(0.0, std::numbers::pi);
      o.aspect = rng.uniform(0.35, 1.0);
      o.temperature_offset = o.hot ? rng.uniform(cfg.hot_offset_min, cfg.hot_offset_max)
                                   : rng.uniform(cfg.cold_offset_min, cfg.cold_offset_max);
      o.base_temperature =
          o.hot ? fg_mean + o.temperature_offset : bg_mean - o.temperature_offset;
      o.edge_softness = rng.uniform(cfg.edge_softness_min, cfg.edge_softness_max);
      if (o.kind == ShapeKind::kConvexPolygon) {
        const int m = static_cast<int>(rng.uniform_int(4, 7));
        std::vector<std::pair<double, double>> pts;
        for (int v = 0; v < m; ++v) {
          const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
          const double rad = rng.uniform(0.55, 1.0);
          pts.emplace_back(rad * std::cos(ang), rad * std::sin(ang));
        }
        o.vertices = convex_hull(std::move(pts));
        if (o.vertices.size() < 3)
          o.vertices = {{-1.0, -0.6}, {1.0, -0.6}, {0.0, 0.9}};  // degenerate hull fallback
      } else if (o.kind == ShapeKind::kStrand) {
        const double half_size = 0.5 * o.size_frac * min_hw;
        const int steps = std::clamp(static_cast<int>(half_size * 4.0), 8, 160);
        double px = o.center_x, py = o.center_y;
        double heading = o.orientation;
        o.strand_path.emplace_back(px, py);
        for (int s = 0; s < steps; ++s) {
          heading += rng.uniform(-0.45, 0.45);
          px += 1.5 * std::cos(heading);
          py += 1.5 * std::sin(heading);
          o.strand_path.emplace_back(px, py);
        }
        o.strand_thickness = std::max(0.8, 0.12 * half_size);
      }
      occluders.push_back(std::move(o));
    }
  }
  if (sampled) *sampled = occluders;
  return render_occluders(img, occluders);
}

ThermalImage add_netd_noise(const ThermalImage& img, double netd_max, Rng& rng) {
  if (!(netd_max > 0.0)) throw ContractError("add_netd_noise: netd_max must be > 0");
  ThermalImage out(img.height, img.width);
  for (size_t i = 0; i < img.values.size(); ++i)
    out.values[i] = img.values[i] + rng.uniform(0.0, netd_max);
  return out;
}

// ---- geometric stage ----

namespace {

double background_mean_or_overall(const ThermalImage& img, const LabelMask& mask) {
  double bg = 0.0;
  int64_t nbg = 0;
  for (size_t i = 0; i < img.values.size(); ++i)
    if (mask.classes[i] == 0) {
      bg += img.values[i];
      ++nbg;
    }
  if (nbg > 0) return bg / static_cast<double>(nbg);
  double total = 0.0;
  for (double v : img.values) total += v;
  return total / static_cast<double>(img.values.size());
}

}  // namespace

std::pair<ThermalImage, LabelMask> apply_geometric(const ThermalImage& img, const LabelMask& mask,
                                                   const GeometricParams& p) {
  ThermalImage im = img;
  LabelMask mk = mask;
  if (p.hflip) {
    im = flip_h(im);
    mk = flip_h(mk);
  }
  if (p.vflip) {
    im = flip_v(im);
    mk = flip_v(mk);
  }
  if (p.rotation_deg != 0.0) {
    im = rotate_bilinear(im, p.rotation_deg, p.rotation_fill);
    mk = rotate_nearest(mk, p.rotation_deg);
  }
  if (p.blur) im = gaussian_blur(im, p.blur_sigma);
  if (p.resize && p.resize_factor != 1.0) {
    const int oh = std::max(1, static_cast<int>(std::lround(im.height * p.resize_factor)));
    const int ow = std::max(1, static_cast<int>(std::lround(im.width * p.resize_factor)));
    im = resize_bilinear(im, oh, ow);
    mk = resize_nearest(mk, oh, ow);
  }
  return {std::move(im), std::move(mk)};
}

std::pair<ThermalImage, LabelMask> geometric_transform(const ThermalImage& img,
                                                       const LabelMask& mask,
                                                       const AugConfig& cfg, Rng& rng,
                                                       GeometricParams* sampled) {
  cfg.validate();
  if (img.height != mask.height || img.width != mask.width)
    throw ContractError("geometric_transform: image and mask dims differ");
  GeometricParams p;
  if (cfg.hflip_enabled) p.hflip = rng.coin();
  if (cfg.vflip_enabled) p.vflip = rng.coin();
  if (cfg.rotation_enabled) {
    p.rotation_deg = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg);
    // fill with a plausible ambient temperature, not 0 C
    p.rotation_fill = background_mean_or_overall(img, mask);
  }
  if (cfg.blur_enabled) {
    p.blur = true;
    p.blur_sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
  }
  if (cfg.resize_enabled) {
    p.resize = true;
    p.resize_factor = rng.uniform(cfg.resize_min, cfg.resize_max);
  }
  if (sampled) *sampled = p;
  return apply_geometric(img, mask, p);
}

// ---- full pipeline ----

AugSample augment(const ThermalImage& img, const LabelMask& mask, const AugConfig& cfg,
                  Rng& rng) {
  cfg.validate();
  AugSample sample;
  auto [gi, gm] = geometric_transform(img, mask, cfg, rng, &sample.applied.geo);
  auto [oi, occ] = synth_occluders(gi, gm, cfg, rng, &sample.applied.occluders);
  sample.applied.noise_applied = cfg.noise_enabled;
  sample.applied.netd_max = cfg.netd_max;
  if (cfg.noise_enabled) {
    sample.applied.noise_seed = rng.next_u64();
    Rng noise_rng(sample.applied.noise_seed);
    oi = add_netd_noise(oi, cfg.netd_max, noise_rng);
  }
  sample.raw_image = std::move(oi);
  sample.image = normalize_min_max(sample.raw_image);
  sample.mask = std::move(gm);
  sample.occlusion_map = std::move(occ);
  return sample;
}

AugSample replay(const ThermalImage& img, const LabelMask& mask, const AppliedParams& applied) {
  AugSample sample;
  sample.applied = applied;
  auto [gi, gm] = apply_geometric(img, mask, applied.geo);
  auto [oi, occ] = render_occluders(gi, applied.occluders);
  if (applied.noise_applied) {
    Rng noise_rng(applied.noise_seed);
    oi = add_netd_noise(oi, applied.netd_max, noise_rng);
  }
  sample.raw_image = std::move(oi);
  sample.image = normalize_min_max(sample.raw_image);
  sample.mask = std::move(gm);
  sample.occlusion_map = std::move(occ);
  return sample;
}

// ---- params sidecar ----

namespace {

json point_list_to_json(const std::vector<std::pair<double, double>>& pts) {
  json arr = json::array();
  for (const auto& [x, y] : pts) arr.push_back({x, y});
  return arr;
}

std::vector<std::pair<double, double>> point_list_from_json(const json& arr) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : arr) pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  return pts;
}

}  // namespace

std::string applied_params_to_json(const AppliedParams& p) {
  json doc;
  doc["geometric"] = {{"hflip", p.geo.hflip},
                      {"vflip", p.geo.vflip},
                      {"rotation_deg", p.geo.rotation_deg},
                      {"rotation_fill", p.geo.rotation_fill},
                      {"blur", p.geo.blur},
                      {"blur_sigma", p.geo.blur_sigma},
                      {"resize", p.geo.resize},
                      {"resize_factor", p.geo.resize_factor}};
  doc["occluders"] = json::array();
  for (const auto& o : p.occluders) {
    json jo = {{"kind", shape_kind_name(o.kind)},
               {"center_x", o.center_x},
               {"center_y", o.center_y},
               {"size_frac", o.size_frac},
               {"orientation", o.orientation},
               {"aspect", o.aspect},
               {"hot", o.hot},
               {"temperature_offset", o.temperature_offset},
               {"edge_softness", o.edge_softness},
               {"base_temperature", o.base_temperature}};
    if (!o.vertices.empty()) jo["vertices"] = point_list_to_json(o.vertices);
    if (!o.strand_path.empty()) {
      jo["strand_path"] = point_list_to_json(o.strand_path);
      jo["strand_thickness"] = o.strand_thickness;
    }
    doc["occluders"].push_back(std::move(jo));
  }
  doc["noise"] = {{"applied", p.noise_applied},
                  {"netd_max", p.netd_max},
                  {"seed", p.noise_seed}};
  return doc.dump(2);
}

AppliedParams applied_params_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError("applied params: invalid JSON: " + std::string(e.what()),
                      static_cast<size_t>(e.byte));
  }
  AppliedParams p;
  const auto& g = doc.at("geometric");
  p.geo.hflip = g.at("hflip").get<bool>();
  p.geo.vflip = g.at("vflip").get<bool>();
  p.geo.rotation_deg = g.at("rotation_deg").get<double>();
  p.geo.rotation_fill = g.at("rotation_fill").get<double>();
  p.geo.blur = g.at("blur").get<bool>();
  p.geo.blur_sigma = g.at("blur_sigma").get<double>();
  p.geo.resize = g.at("resize").get<bool>();
  p.geo.resize_factor = g.at("resize_factor").get<double>();
  for (const auto& jo : doc.at("occluders")) {
    OccluderParams o;
    o.kind = shape_kind_from_name(jo.at("kind").get<std::string>());
    o.center_x = jo.at("center_x").get<double>();
    o.center_y = jo.at("center_y").get<double>();
    o.size_frac = jo.at("size_frac").get<double>();
    o.orientation = jo.at("orientation").get<double>();
    o.aspect = jo.at("aspect").get<double>();
    o.hot = jo.at("hot").get<bool>();
    o.temperature_offset = jo.at("temperature_offset").get<double>();
    o.edge_softness = jo.at("edge_softness").get<double>();
    o.base_temperature = jo.at("base_temperature").get<double>();
    if (jo.contains("vertices")) o.vertices = point_list_from_json(jo["vertices"]);
    if (jo.contains("strand_path")) {
      o.strand_path = point_list_from_json(jo["strand_path"]);
      o.strand_thickness = jo.at("strand_thickness").get<double>();
    }
    p.occluders.push_back(std::move(o));
  }
  const auto& n = doc.at("noise");
  p.noise_applied = n.at("applied").get<bool>();
  p.netd_max = n.at("netd_max").get<double>();
  p.noise_seed = n.at("seed").get<uint64_t>();
  return p;
}

}  // namespace samcl::tiaug
