#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "samcl/dataset.hpp"
#include "samcl/errors.hpp"
#include "samcl/rng.hpp"
#include "samcl/tiaug.hpp"

using namespace samcl;
using namespace samcl::tiaug;

namespace {

// 64x64 scene with a warm square face region; handy when exact statistics are
// needed.
std::pair<ThermalImage, LabelMask> flat_scene(double face_temp = 34.0, double bg_temp = 22.0) {
  ThermalImage img(64, 64, bg_temp);
  LabelMask mask(64, 64, 0);
  for (int y = 20; y < 44; ++y)
    for (int x = 20; x < 44; ++x) {
      img.at(y, x) = face_temp;
      mask.at(y, x) = 1;
    }
  return {img, mask};
}

AugConfig disabled_config() {
  AugConfig cfg;
  cfg.occluders_enabled = false;
  cfg.noise_enabled = false;
  cfg.hflip_enabled = false;
  cfg.vflip_enabled = false;
  cfg.rotation_enabled = false;
  cfg.blur_enabled = false;
  cfg.resize_enabled = false;
  return cfg;
}

}  // namespace

TEST_CASE("netd noise is bounded in [0, netd_max) and seeded") {
  auto [img, mask] = flat_scene();
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    ThermalImage noisy = add_netd_noise(img, 0.1, rng);
    for (size_t i = 0; i < img.values.size(); ++i) {
      const double delta = noisy.values[i] - img.values[i];
      CHECK(delta >= 0.0);
      CHECK(delta < 0.1);
    }
  }
  Rng a(5), b(5);
  CHECK(add_netd_noise(img, 0.1, a).values == add_netd_noise(img, 0.1, b).values);
  // degenerate bound; allow the f64 rounding of adding ~1e-12 to ~22 C
  Rng c(5);
  ThermalImage tiny = add_netd_noise(img, 1e-12, c);
  const double ulp_slack = 4.0 * std::numeric_limits<double>::epsilon() * 34.0;
  for (size_t i = 0; i < img.values.size(); ++i)
    CHECK(std::abs(tiny.values[i] - img.values[i]) <= 1e-12 + ulp_slack);
  Rng d(5);
  CHECK_THROWS_AS(add_netd_noise(img, 0.0, d), ContractError);
}

TEST_CASE("zero occluder count is the identity") {
  auto [img, mask] = flat_scene();
  AugConfig cfg;
  cfg.count_min = 0;
  cfg.count_max = 0;
  Rng rng(1);
  auto [out, occ] = synth_occluders(img, mask, cfg, rng);
  CHECK(out.values == img.values);
  CHECK(std::count(occ.occluded.begin(), occ.occluded.end(), 1) == 0);
}

TEST_CASE("hot ellipse core pixels equal face mean plus offset") {
  auto [img, mask] = flat_scene(34.0, 22.0);
  OccluderParams o;
  o.kind = ShapeKind::kEllipse;
  o.center_x = 32.0;
  o.center_y = 32.0;
  o.size_frac = 0.2;
  o.aspect = 1.0;
  o.hot = true;
  o.temperature_offset = 10.0;
  o.base_temperature = 34.0 + 10.0;
  o.edge_softness = 0.0;
  auto [out, occ] = render_occluders(img, {o});
  CHECK(out.at(32, 32) == doctest::Approx(44.0));
  CHECK(occ.at(32, 32) == 1);
  CHECK(out.at(0, 0) == doctest::Approx(22.0));
  CHECK(occ.at(0, 0) == 0);
}

TEST_CASE("sampled occluders sit strictly beyond the pre-occlusion statistics") {
  data::SyntheticFaceConfig face_cfg;
  AugConfig cfg;
  cfg.count_min = 2;
  cfg.count_max = 4;
  cfg.hot_offset_min = 5.0;
  cfg.hot_offset_max = 15.0;
  cfg.cold_offset_min = 5.0;
  cfg.cold_offset_max = 15.0;
  Rng face_rng(2024);
  int satisfied = 0;
  const int total = 40;
  for (int rep = 0; rep < total; ++rep) {
    auto [img, mask] = data::synth_face(face_cfg, face_rng);
    const auto [fg_mean, bg_mean] = fg_bg_stats(img, mask);
    double face_max = -1e30, bg_min = 1e30;
    for (size_t i = 0; i < img.values.size(); ++i) {
      if (mask.classes[i] != 0) face_max = std::max(face_max, img.values[i]);
      else bg_min = std::min(bg_min, img.values[i]);
    }
    Rng rng(mix_seed(777, {static_cast<uint64_t>(rep)}));
    std::vector<OccluderParams> sampled;
    auto [out, occ] = synth_occluders(img, mask, cfg, rng, &sampled);
    REQUIRE(sampled.size() >= 2);
    for (const auto& o : sampled) {
      if (o.hot) CHECK(o.base_temperature > fg_mean);
      else CHECK(o.base_temperature < bg_mean);
    }
    double out_max = *std::max_element(out.values.begin(), out.values.end());
    double out_min = *std::min_element(out.values.begin(), out.values.end());
    if (out_max > face_max && out_min < bg_min) ++satisfied;
  }
  CHECK(satisfied >= total * 8 / 10);
}

TEST_CASE("flips are involutions and identity parameters are exact") {
  auto [img, mask] = flat_scene();
  img.at(3, 5) = 29.5;
  CHECK(flip_h(flip_h(img)).values == img.values);
  CHECK(flip_v(flip_v(img)).values == img.values);
  CHECK(flip_h(flip_h(mask)) == mask);
  CHECK(rotate_bilinear(img, 0.0, 0.0).values == img.values);
  CHECK(rotate_nearest(mask, 0.0) == mask);
  CHECK(resize_bilinear(img, 64, 64).values == img.values);
  CHECK(resize_nearest(mask, 64, 64) == mask);
  GeometricParams p;  // everything off
  auto [im2, mk2] = apply_geometric(img, mask, p);
  CHECK(im2.values == img.values);
  CHECK(mk2 == mask);
}

TEST_CASE("resize halves dimensions and never invents labels") {
  auto [img, mask] = flat_scene();
  LabelMask varied = mask;
  varied.at(10, 10) = 3;
  varied.at(50, 50) = 5;
  ThermalImage half_img = resize_bilinear(img, 32, 32);
  LabelMask half_mask = resize_nearest(varied, 32, 32);
  CHECK(half_img.height == 32);
  CHECK(half_img.width == 32);
  std::set<int> before(varied.classes.begin(), varied.classes.end());
  std::set<int> after(half_mask.classes.begin(), half_mask.classes.end());
  for (int c : after) CHECK(before.count(c) == 1);
  CHECK(after.size() <= before.size());
}

TEST_CASE("min_max_normalize maps {20,30,40} to {0,0.5,1}") {
  ThermalImage img(1, 3);
  img.values = {20.0, 30.0, 40.0};
  ThermalImage norm = min_max_normalize(img);
  CHECK(norm.values[0] == 0.0);
  CHECK(norm.values[1] == doctest::Approx(0.5));
  CHECK(norm.values[2] == 1.0);
  ThermalImage flat(2, 2, 25.0);
  CHECK_THROWS_AS(min_max_normalize(flat), ContractError);
}

TEST_CASE("a hot occluder pixel halves the normalized face/background contrast") {
  // bg 20, face 35: contrast spans the full normalized range
  ThermalImage img(1, 3);
  img.values = {20.0, 35.0, 27.0};
  ThermalImage norm = min_max_normalize(img);
  const double contrast = norm.values[1] - norm.values[0];
  CHECK(contrast == doctest::Approx(1.0));
  // replacing one pixel with a 50 C object doubles the range
  ThermalImage occluded = img;
  occluded.values[2] = 50.0;
  ThermalImage norm2 = min_max_normalize(occluded);
  const double contrast2 = norm2.values[1] - norm2.values[0];
  CHECK(contrast2 == doctest::Approx(0.5 * contrast));
}

TEST_CASE("normalized output hits 0 and 1 exactly") {
  Rng rng(31);
  ThermalImage img(8, 8);
  for (auto& v : img.values) v = rng.uniform(18.0, 40.0);
  ThermalImage norm = min_max_normalize(img);
  CHECK(*std::min_element(norm.values.begin(), norm.values.end()) == 0.0);
  CHECK(*std::max_element(norm.values.begin(), norm.values.end()) == 1.0);
}

TEST_CASE("augment with everything disabled is plain normalization") {
  auto [img, mask] = flat_scene();
  Rng rng(12);
  AugSample sample = augment(img, mask, disabled_config(), rng);
  CHECK(sample.image.values == min_max_normalize(img).values);
  CHECK(sample.mask == mask);
  CHECK(std::count(sample.occlusion_map.occluded.begin(), sample.occlusion_map.occluded.end(),
                   1) == 0);
}

TEST_CASE("augment is deterministic and replays bit-exactly") {
  data::SyntheticFaceConfig face_cfg;
  Rng face_rng(5150);
  auto [img, mask] = data::synth_face(face_cfg, face_rng);
  AugConfig cfg;
  cfg.count_min = 1;
  cfg.count_max = 3;
  cfg.blur_enabled = true;
  cfg.resize_enabled = true;

  Rng a(808), b(808);
  AugSample s1 = augment(img, mask, cfg, a);
  AugSample s2 = augment(img, mask, cfg, b);
  CHECK(s1.image.values == s2.image.values);
  CHECK(s1.raw_image.values == s2.raw_image.values);
  CHECK(s1.mask == s2.mask);
  CHECK(s1.occlusion_map == s2.occlusion_map);

  AugSample replayed = replay(img, mask, s1.applied);
  CHECK(replayed.image.values == s1.image.values);
  CHECK(replayed.raw_image.values == s1.raw_image.values);
  CHECK(replayed.mask == s1.mask);
  CHECK(replayed.occlusion_map == s1.occlusion_map);

  // JSON sidecar round-trips to the identical sample
  AppliedParams parsed = applied_params_from_json(applied_params_to_json(s1.applied));
  AugSample from_json = replay(img, mask, parsed);
  CHECK(from_json.image.values == s1.image.values);
  CHECK(from_json.raw_image.values == s1.raw_image.values);
}

TEST_CASE("occluders and noise never touch the mask") {
  data::SyntheticFaceConfig face_cfg;
  Rng face_rng(61);
  auto [img, mask] = data::synth_face(face_cfg, face_rng);
  AugConfig cfg = disabled_config();
  cfg.occluders_enabled = true;
  cfg.count_min = 2;
  cfg.count_max = 4;
  cfg.noise_enabled = true;
  Rng rng(62);
  AugSample sample = augment(img, mask, cfg, rng);
  CHECK(sample.mask == mask);
}

TEST_CASE("non-occluded pixels pass through the pipeline unchanged before normalization") {
  auto [img, mask] = flat_scene();
  AugConfig cfg = disabled_config();
  cfg.occluders_enabled = true;
  cfg.count_min = 1;
  cfg.count_max = 2;
  cfg.edge_softness_min = 0.0;
  cfg.edge_softness_max = 0.0;  // hard edges: blend weight is 0 or 1
  Rng rng(88);
  AugSample sample = augment(img, mask, cfg, rng);
  int occluded_count = 0;
  for (size_t i = 0; i < img.values.size(); ++i) {
    if (sample.occlusion_map.occluded[i]) {
      ++occluded_count;
    } else {
      CHECK(sample.raw_image.values[i] == img.values[i]);
    }
  }
  CHECK(occluded_count > 0);
}

TEST_CASE("fg_bg_stats basics and occluder response") {
  auto [img, mask] = flat_scene(30.0, 22.0);
  auto [fg, bg] = fg_bg_stats(img, mask);
  CHECK(fg == doctest::Approx(30.0));
  CHECK(bg == doctest::Approx(22.0));

  // hot object over half the background raises the background mean
  ThermalImage hot = img;
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 64; ++x) hot.at(y, x) = 45.0;
  auto [fg2, bg2] = fg_bg_stats(hot, mask);
  CHECK(bg2 > bg);
  CHECK(fg2 == doctest::Approx(30.0));

  LabelMask empty_face(64, 64, 0);
  CHECK_THROWS_AS(fg_bg_stats(img, empty_face), StatsError);
  LabelMask all_face(64, 64, 1);
  CHECK_THROWS_AS(fg_bg_stats(img, all_face), StatsError);
}

TEST_CASE("augmentation widens the distribution of normalized region means") {
  data::SyntheticFaceConfig face_cfg;
  AugConfig cfg;
  cfg.count_min = 1;
  cfg.count_max = 3;
  cfg.hot_offset_min = 5.0;
  cfg.cold_offset_min = 5.0;
  std::vector<double> clean_fg, aug_fg;
  for (int rep = 0; rep < 100; ++rep) {
    Rng face_rng(mix_seed(31337, {static_cast<uint64_t>(rep)}));
    auto [img, mask] = data::synth_face(face_cfg, face_rng);
    auto clean = fg_bg_stats(min_max_normalize(img), mask);
    clean_fg.push_back(clean.first);
    Rng aug_rng(mix_seed(424242, {static_cast<uint64_t>(rep)}));
    AugSample sample = augment(img, mask, cfg, aug_rng);
    // geometric stage may move the mask; stats use the co-transformed mask
    auto augd = fg_bg_stats(sample.image, sample.mask);
    aug_fg.push_back(augd.first);
  }
  auto stddev = [](const std::vector<double>& v) {
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - mu) * (x - mu);
    return std::sqrt(acc / static_cast<double>(v.size()));
  };
  CHECK(stddev(aug_fg) > stddev(clean_fg));
}

TEST_CASE("histogram mass escapes the two original modes in every occluded sample") {
  data::SyntheticFaceConfig face_cfg;
  AugConfig cfg = disabled_config();
  cfg.occluders_enabled = true;
  cfg.count_min = 1;
  cfg.count_max = 3;
  cfg.size_min = 0.10;
  cfg.size_max = 0.30;
  cfg.hot_offset_min = 5.0;
  cfg.hot_offset_max = 15.0;
  cfg.cold_offset_min = 5.0;
  cfg.cold_offset_max = 15.0;
  cfg.noise_enabled = true;
  // 0.5 C bins over [18, 40); each mode is its modal bin plus 2 bins of slack
  // on either side, so NETD-scale noise cannot walk mass across a mode edge
  // while occluder temperatures (>= 5 C away) always land outside
  const int bins = 44;
  const int halo = 2;
  for (int rep = 0; rep < 30; ++rep) {
    Rng face_rng(mix_seed(777001, {static_cast<uint64_t>(rep)}));
    auto [img, mask] = data::synth_face(face_cfg, face_rng);
    auto pre = compute_histogram(img, bins, 18.0, 40.0);
    int m1 = 0;
    for (int b = 1; b < bins; ++b)
      if (pre.counts[b] > pre.counts[m1]) m1 = b;
    int m2 = -1;
    for (int b = 0; b < bins; ++b) {
      if (std::abs(b - m1) <= 2 * halo + 1) continue;
      if (m2 < 0 || pre.counts[b] > pre.counts[m2]) m2 = b;
    }
    REQUIRE(m2 >= 0);
    Rng rng(mix_seed(777002, {static_cast<uint64_t>(rep)}));
    AugSample sample = augment(img, mask, cfg, rng);
    auto post = compute_histogram(sample.raw_image, bins, 18.0, 40.0);
    auto outside = [&](const Histogram& h, int64_t total) {
      int64_t inside = 0;
      for (int b = 0; b < bins; ++b)
        if (std::abs(b - m1) <= halo || std::abs(b - m2) <= halo) inside += h.counts[b];
      return static_cast<double>(total - inside) / static_cast<double>(total);
    };
    const double pre_outside = outside(pre, img.pixel_count());
    const double post_outside = outside(post, sample.raw_image.pixel_count());
    CHECK(post_outside > pre_outside);
  }
}

TEST_CASE("config validation rejects malformed ranges") {
  AugConfig cfg;
  cfg.count_min = 3;
  cfg.count_max = 1;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = AugConfig{};
  cfg.resize_enabled = true;
  cfg.resize_max = 3.0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = AugConfig{};
  cfg.hot_enabled = false;
  cfg.cold_enabled = false;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = AugConfig{};
  cfg.noise_enabled = true;
  cfg.netd_max = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
}
