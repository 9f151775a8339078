#include "samcl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "samcl/errors.hpp"

namespace samcl::data {

namespace fs = std::filesystem;
using nlohmann::json;

RegionDefinition default_face_regions() {
  RegionDefinition regions;
  auto range = [](int lo, int hi) {
    std::vector<int> idx;
    for (int i = lo; i <= hi; ++i) idx.push_back(i);
    return idx;
  };
  regions.push_back({kChin, "chin", range(0, 16)});
  regions.push_back({kMouth, "mouth", range(48, 59)});
  regions.push_back({kNose, "nose", {27, 31, 32, 33, 34, 35}});
  regions.push_back({kEyebrows, "eyebrow_right", range(17, 21)});
  regions.push_back({kEyebrows, "eyebrow_left", range(22, 26)});
  regions.push_back({kEyes, "eye_right", range(36, 41)});
  regions.push_back({kEyes, "eye_left", range(42, 47)});
  return regions;
}

namespace {

double shoelace_area(const std::vector<std::pair<double, double>>& poly) {
  double acc = 0.0;
  for (size_t i = 0; i < poly.size(); ++i) {
    const auto& [x1, y1] = poly[i];
    const auto& [x2, y2] = poly[(i + 1) % poly.size()];
    acc += x1 * y2 - x2 * y1;
  }
  return 0.5 * acc;
}

// Both the scanline fill and the brute-force oracle in the tests rely on this
// exact predicate: a point is inside when an odd number of edges cross the
// horizontal ray to +x.
void fill_polygon(const std::vector<std::pair<double, double>>& poly, uint8_t class_id,
                  LabelMask& mask) {
  double ymin = poly[0].second, ymax = poly[0].second;
  for (const auto& [x, y] : poly) {
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  const int y0 = std::max(0, static_cast<int>(std::floor(ymin - 0.5)));
  const int y1 = std::min(mask.height - 1, static_cast<int>(std::ceil(ymax)));
  std::vector<double> xs;
  for (int y = y0; y <= y1; ++y) {
    const double yc = y + 0.5;
    xs.clear();
    for (size_t i = 0; i < poly.size(); ++i) {
      const auto& [ax, ay] = poly[i];
      const auto& [bx, by] = poly[(i + 1) % poly.size()];
      if ((ay > yc) != (by > yc)) xs.push_back(ax + (yc - ay) / (by - ay) * (bx - ax));
    }
    if (xs.empty()) continue;
    std::sort(xs.begin(), xs.end());
    // a pixel center is inside when the count of crossings strictly to its
    // right is odd
    size_t ptr = 0;
    for (int x = 0; x < mask.width; ++x) {
      const double xc = x + 0.5;
      while (ptr < xs.size() && xs[ptr] <= xc) ++ptr;
      if ((xs.size() - ptr) % 2 == 1) mask.at(y, x) = class_id;
    }
  }
}

}  // namespace

LabelMask landmarks_to_mask(const LandmarkSet& lm, const RegionDefinition& regions, int height,
                            int width) {
  if (lm.points.size() != 68)
    throw ContractError("landmarks_to_mask: expected 68 points, got " +
                        std::to_string(lm.points.size()));
  for (size_t i = 0; i < lm.points.size(); ++i) {
    const auto& [x, y] = lm.points[i];
    if (x < 0 || x > width || y < 0 || y > height)
      throw ContractError("landmarks_to_mask: point " + std::to_string(i) + " (" +
                          std::to_string(x) + "," + std::to_string(y) + ") out of bounds");
  }
  LabelMask mask(height, width, kBackground);
  for (const auto& region : regions) {
    std::vector<std::pair<double, double>> poly;
    for (int idx : region.landmark_indices) {
      if (idx < 0 || idx >= static_cast<int>(lm.points.size()))
        throw ContractError("landmarks_to_mask: region '" + region.name +
                            "' references landmark " + std::to_string(idx));
      poly.push_back(lm.points[static_cast<size_t>(idx)]);
    }
    std::vector<std::pair<double, double>> distinct;
    for (const auto& p : poly)
      if (std::find(distinct.begin(), distinct.end(), p) == distinct.end()) distinct.push_back(p);
    if (distinct.size() < 3)
      throw ContractError("landmarks_to_mask: region '" + region.name +
                          "' has fewer than 3 distinct points");
    if (shoelace_area(poly) == 0.0)
      throw ContractError("landmarks_to_mask: region '" + region.name +
                          "' is degenerate (zero area)");
    fill_polygon(poly, region.class_id, mask);
  }
  return mask;
}

LandmarkSet load_landmarks(const std::string& path, std::string subject_id,
                           std::string frame_id) {
  std::ifstream is(path);
  if (!is) throw FormatError("landmarks: cannot open: " + path, 0);
  LandmarkSet lm;
  lm.subject_id = std::move(subject_id);
  lm.frame_id = std::move(frame_id);
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    double x, y;
    if (!(ls >> x >> y))
      throw FormatError("landmarks: cannot parse line " + std::to_string(line_no), line_no);
    lm.points.emplace_back(x, y);
  }
  if (lm.points.size() != 68)
    throw FormatError("landmarks: expected 68 points, got " + std::to_string(lm.points.size()),
                      line_no);
  return lm;
}

std::pair<DatasetIndex, DatasetIndex> split_by_subject(const DatasetIndex& index,
                                                       double train_fraction, Rng& rng) {
  std::vector<std::string> subjects;
  for (const auto& e : index.entries)
    if (std::find(subjects.begin(), subjects.end(), e.subject_id) == subjects.end())
      subjects.push_back(e.subject_id);
  if (subjects.size() < 2)
    throw ContractError("split_by_subject: need >= 2 distinct subjects, got " +
                        std::to_string(subjects.size()));
  rng.shuffle(subjects);
  auto n_train = static_cast<size_t>(
      std::ceil(train_fraction * static_cast<double>(subjects.size())));
  n_train = std::min(std::max<size_t>(n_train, 1), subjects.size() - 1);
  std::set<std::string> train_set(subjects.begin(), subjects.begin() + n_train);
  DatasetIndex train, val;
  for (const auto& e : index.entries)
    (train_set.count(e.subject_id) ? train : val).entries.push_back(e);
  return {train, val};
}

DatasetIndex load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("manifest: cannot open: " + path, 0);
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw FormatError("manifest: invalid JSON: " + std::string(e.what()),
                      static_cast<size_t>(e.byte));
  }
  if (!doc.contains("entries") || !doc["entries"].is_array())
    throw FormatError("manifest: missing 'entries' array", 0);
  const fs::path base = fs::path(path).parent_path();
  DatasetIndex index;
  for (const auto& item : doc["entries"]) {
    DatasetEntry e;
    e.image_path = (base / item.at("image").get<std::string>()).string();
    e.mask_path = (base / item.at("mask").get<std::string>()).string();
    e.subject_id = item.at("subject").get<std::string>();
    if (!fs::exists(e.image_path))
      throw FormatError("manifest: missing image file " + e.image_path, 0);
    if (!fs::exists(e.mask_path))
      throw FormatError("manifest: missing mask file " + e.mask_path, 0);
    index.entries.push_back(std::move(e));
  }
  if (index.entries.empty()) throw FormatError("manifest: no entries", 0);
  return index;
}

void save_manifest(const std::string& path, const DatasetIndex& index) {
  const fs::path base = fs::path(path).parent_path();
  json doc;
  doc["entries"] = json::array();
  for (const auto& e : index.entries) {
    doc["entries"].push_back({{"image", fs::relative(e.image_path, base).string()},
                              {"mask", fs::relative(e.mask_path, base).string()},
                              {"subject", e.subject_id}});
  }
  std::ofstream os(path);
  if (!os) throw FormatError("manifest: cannot open for write: " + path, 0);
  os << doc.dump(2) << "\n";
}

// ---- synthetic faces ----

void SyntheticFaceConfig::validate() const {
  if (height < 16 || width < 16)
    throw ContractError("synthetic: image size must be >= 16x16");
  if (!(bg_temp_max > bg_temp_min) || !(face_temp_max > face_temp_min))
    throw ContractError("synthetic: temperature ranges must be non-empty");
  if (!(face_temp_min > bg_temp_max))
    throw ContractError("synthetic: face range must sit strictly above background range");
  if (num_subjects < 1) throw ContractError("synthetic: num_subjects must be >= 1");
}

SubjectParams sample_subject(const SyntheticFaceConfig& cfg, Rng& rng) {
  cfg.validate();
  SubjectParams s;
  s.center_x_frac = 0.5 + rng.uniform(-0.04, 0.04);
  s.center_y_frac = 0.5 + rng.uniform(-0.04, 0.04);
  s.axis_x_frac = rng.uniform(0.28, 0.34);
  s.axis_y_frac = rng.uniform(0.36, 0.42);
  s.face_base_temp = rng.uniform(cfg.face_temp_min + 0.4, cfg.face_temp_max - 0.8);
  s.bg_base_temp = rng.uniform(cfg.bg_temp_min + 0.8, cfg.bg_temp_max - 0.8);
  s.bg_gradient_x = rng.uniform(-0.5, 0.5);
  s.bg_gradient_y = rng.uniform(-0.5, 0.5);
  s.region_scale = rng.uniform(0.9, 1.1);
  return s;
}

namespace {

struct Ellipse {
  double cx, cy, ax, ay;
  bool contains(double x, double y) const {
    const double dx = (x - cx) / ax;
    const double dy = (y - cy) / ay;
    return dx * dx + dy * dy <= 1.0;
  }
  double radius(double x, double y) const {
    const double dx = (x - cx) / ax;
    const double dy = (y - cy) / ay;
    return std::sqrt(dx * dx + dy * dy);
  }
};

void paint_region(const Ellipse& e, uint8_t class_id, double temp, ThermalImage& img,
                  LabelMask& mask) {
  const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - e.ax)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(e.cx + e.ax)));
  const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - e.ay)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(e.cy + e.ay)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (e.contains(x + 0.5, y + 0.5)) {
        img.at(y, x) = temp;
        mask.at(y, x) = class_id;
      }
}

}  // namespace

std::pair<ThermalImage, LabelMask> synth_face_frame(const SyntheticFaceConfig& cfg,
                                                    const SubjectParams& subject,
                                                    Rng& frame_rng) {
  cfg.validate();
  const int H = cfg.height, W = cfg.width;
  ThermalImage img(H, W);
  LabelMask mask(H, W, kBackground);

  const double jit = cfg.geometry_jitter;
  const double cx = (subject.center_x_frac + frame_rng.uniform(-jit, jit) * 0.5) * W;
  const double cy = (subject.center_y_frac + frame_rng.uniform(-jit, jit) * 0.5) * H;
  const double ax = subject.axis_x_frac * W * (1.0 + frame_rng.uniform(-jit, jit));
  const double ay = subject.axis_y_frac * H * (1.0 + frame_rng.uniform(-jit, jit));
  const double face_base = subject.face_base_temp + frame_rng.uniform(-0.1, 0.1);

  // background: gentle gradient plus fine noise, well inside the bg range
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double v = subject.bg_base_temp + subject.bg_gradient_x * (x / double(W) - 0.5) +
                 subject.bg_gradient_y * (y / double(H) - 0.5) +
                 frame_rng.uniform(-0.15, 0.15);
      img.at(y, x) = std::clamp(v, cfg.bg_temp_min, cfg.bg_temp_max);
    }

  // face: warm ellipse, slightly warmer toward the center; skin outside the
  // labeled sub-regions stays class 0 like the unlabeled regions of the real
  // landmark-derived masks
  const Ellipse face{cx, cy, ax, ay};
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      if (face.contains(px, py)) {
        const double r = face.radius(px, py);
        img.at(y, x) = std::clamp(face_base + 0.6 * (1.0 - r) + frame_rng.uniform(-0.1, 0.1),
                                  cfg.face_temp_min, cfg.face_temp_max);
      }
    }

  const double rs = subject.region_scale;
  auto jf = [&] { return 1.0 + frame_rng.uniform(-jit, jit); };
  // paint order encodes priority: chin < mouth < nose < eyebrows < eyes
  paint_region({cx, cy + 0.52 * ay, 0.60 * ax * rs * jf(), 0.42 * ay * rs * jf()}, kChin,
               face_base + cfg.chin_offset, img, mask);
  paint_region({cx, cy + 0.52 * ay, 0.30 * ax * rs * jf(), 0.14 * ay * rs * jf()}, kMouth,
               face_base + cfg.mouth_offset, img, mask);
  paint_region({cx, cy + 0.06 * ay, 0.17 * ax * rs * jf(), 0.30 * ay * rs * jf()}, kNose,
               face_base + cfg.nose_offset, img, mask);
  for (int side : {-1, 1}) {
    paint_region({cx + side * 0.45 * ax, cy - 0.36 * ay, 0.22 * ax * rs * jf(),
                  0.08 * ay * rs * jf()},
                 kEyebrows, face_base + cfg.brow_offset, img, mask);
    paint_region({cx + side * 0.42 * ax, cy - 0.17 * ay, 0.19 * ax * rs * jf(),
                  0.10 * ay * rs * jf()},
                 kEyes, face_base + cfg.eye_offset, img, mask);
  }
  return {std::move(img), std::move(mask)};
}

std::pair<ThermalImage, LabelMask> synth_face(const SyntheticFaceConfig& cfg, Rng& rng) {
  const SubjectParams subject = sample_subject(cfg, rng);
  return synth_face_frame(cfg, subject, rng);
}

}  // namespace samcl::data
