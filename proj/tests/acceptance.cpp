// Acceptance suite: every release criterion runs at its stated tolerance and
// prints one [PASS]/[FAIL] line. Exit code 0 only if all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "samcl/config.hpp"
#include "samcl/dataset.hpp"
#include "samcl/errors.hpp"
#include "samcl/gradcheck.hpp"
#include "samcl/loss.hpp"
#include "samcl/metrics.hpp"
#include "samcl/nn.hpp"
#include "samcl/rng.hpp"
#include "samcl/tensor.hpp"
#include "samcl/tiaug.hpp"
#include "samcl/train.hpp"

namespace fs = std::filesystem;
using namespace samcl;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int criterion, const char* name, bool ok, const std::string& detail = "") {
  std::printf("[%s] criterion %2d: %s%s%s\n", ok ? "PASS" : "FAIL", criterion, name,
              detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double elapsed(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---- 1: gradient suite ----

void criterion_gradients() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::string worst_op;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    std::vector<GradcheckReport> all;
    for (auto& r : gradcheck_tensor_suite(seed)) all.push_back(r);
    for (auto& r : gradcheck_loss_suite(seed)) all.push_back(r);
    for (auto& r : gradcheck_net_suite(seed)) all.push_back(r);
    for (const auto& r : all)
      if (r.max_rel_err > worst) {
        worst = r.max_rel_err;
        worst_op = r.op;
      }
  }
  const double secs = elapsed(start);
  char detail[160];
  std::snprintf(detail, sizeof(detail), "max rel err %.3e (%s), 5 seeds, %.1f s", worst,
                worst_op.c_str(), secs);
  report(1, "analytic gradients match central finite differences", worst < 1e-4 && secs < 120.0,
         detail);
}

// ---- 2: derangement sampling ----

void criterion_derangements() {
  Rng rng(2026);
  bool no_fixed_points = true;
  for (int n = 2; n <= 6; ++n)
    for (int rep = 0; rep < 500; ++rep) {
      auto perm = loss::sample_derangement(n, rng);
      for (int i = 0; i < n; ++i)
        if (perm[static_cast<size_t>(i)] == i) no_fixed_points = false;
    }
  std::map<std::vector<int>, int> freq;
  for (int rep = 0; rep < 1000; ++rep) freq[loss::sample_derangement(3, rng)] += 1;
  const int a = freq[std::vector<int>{1, 2, 0}];
  const int b = freq[std::vector<int>{2, 0, 1}];
  const bool balanced = (a + b == 1000) && std::abs(a - 500) <= 50;
  char detail[120];
  std::snprintf(detail, sizeof(detail), "C=3 split %d/%d", a, b);
  report(2, "class-swap permutations are derangements, uniformly sampled",
         no_fixed_points && balanced, detail);
}

// ---- 3: triplet hinge arithmetic ----

void criterion_triplet() {
  const double inactive = loss::triplet_term(Tensor::scalar(0.2), Tensor::scalar(1.5), 1.0).value();
  const double active = loss::triplet_term(Tensor::scalar(0.2), Tensor::scalar(0.3), 1.0).value();
  const bool ok = inactive == 0.0 && active == (0.2 - 0.3 + 1.0) &&
                  std::abs(active - 0.9) < 1e-15;
  char detail[120];
  std::snprintf(detail, sizeof(detail), "hinge(0.2,1.5,1.0)=%g hinge(0.2,0.3,1.0)=%.17g",
                inactive, active);
  report(3, "triplet hinge is exact", ok, detail);
}

// ---- 4: NETD noise bound ----

void criterion_netd() {
  data::SyntheticFaceConfig face_cfg;
  tiaug::AugConfig cfg;
  cfg.occluders_enabled = false;
  cfg.hflip_enabled = false;
  cfg.vflip_enabled = false;
  cfg.rotation_enabled = false;
  cfg.blur_enabled = false;
  cfg.resize_enabled = false;
  cfg.noise_enabled = true;
  cfg.netd_max = 0.1;
  bool ok = true;
  for (int rep = 0; rep < 100 && ok; ++rep) {
    Rng face_rng(mix_seed(404001, {static_cast<uint64_t>(rep)}));
    auto [img, mask] = data::synth_face(face_cfg, face_rng);
    Rng rng(mix_seed(404002, {static_cast<uint64_t>(rep)}));
    tiaug::AugSample s = tiaug::augment(img, mask, cfg, rng);
    for (size_t i = 0; i < img.values.size(); ++i) {
      const double delta = s.raw_image.values[i] - img.values[i];
      if (!(delta >= 0.0 && delta < 0.1)) {
        ok = false;
        break;
      }
    }
  }
  report(4, "per-pixel noise stays in [0, 0.1) C over 100 seeded augmentations", ok);
}

// ---- 5: hot/cold histogram disruption ----

void criterion_hot_cold() {
  data::SyntheticFaceConfig face_cfg;
  tiaug::AugConfig cfg;
  cfg.count_min = 2;
  cfg.count_max = 4;
  cfg.size_min = 0.10;
  cfg.size_max = 0.30;
  cfg.hot_offset_min = 5.0;
  cfg.hot_offset_max = 15.0;
  cfg.cold_offset_min = 5.0;
  cfg.cold_offset_max = 15.0;
  cfg.noise_enabled = true;
  cfg.hflip_enabled = false;
  cfg.rotation_enabled = false;

  int beyond_extremes = 0;
  int mass_increase_failures = 0;
  const int bins = 44, halo = 2;
  for (int rep = 0; rep < 100; ++rep) {
    Rng face_rng(mix_seed(505001, {static_cast<uint64_t>(rep)}));
    auto [img, mask] = data::synth_face(face_cfg, face_rng);
    double face_max = -1e30, bg_min = 1e30;
    for (size_t i = 0; i < img.values.size(); ++i) {
      if (mask.classes[i] != 0) face_max = std::max(face_max, img.values[i]);
      else bg_min = std::min(bg_min, img.values[i]);
    }
    Rng rng(mix_seed(505002, {static_cast<uint64_t>(rep)}));
    tiaug::AugSample s = tiaug::augment(img, mask, cfg, rng);
    const double out_max = *std::max_element(s.raw_image.values.begin(), s.raw_image.values.end());
    const double out_min = *std::min_element(s.raw_image.values.begin(), s.raw_image.values.end());
    if (out_max > face_max && out_min < bg_min) ++beyond_extremes;

    auto pre = compute_histogram(img, bins, 18.0, 40.0);
    int m1 = 0;
    for (int b = 1; b < bins; ++b)
      if (pre.counts[b] > pre.counts[m1]) m1 = b;
    int m2 = -1;
    for (int b = 0; b < bins; ++b) {
      if (std::abs(b - m1) <= 2 * halo + 1) continue;
      if (m2 < 0 || pre.counts[b] > pre.counts[m2]) m2 = b;
    }
    auto post = compute_histogram(s.raw_image, bins, 18.0, 40.0);
    auto outside = [&](const Histogram& h) {
      int64_t inside = 0;
      for (int b = 0; b < bins; ++b)
        if (std::abs(b - m1) <= halo || std::abs(b - m2) <= halo) inside += h.counts[b];
      return static_cast<double>(img.pixel_count() - inside);
    };
    if (!(outside(post) > outside(pre))) ++mass_increase_failures;
  }
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "%d/100 beyond both extremes; %d samples without mass escape", beyond_extremes,
                mass_increase_failures);
  report(5, "hot/cold occluders disrupt the bimodal histogram",
         beyond_extremes >= 80 && mass_increase_failures == 0, detail);
}

// ---- 6: mIoU oracle equivalence ----

void criterion_miou_oracle() {
  Rng rng(606);
  bool ok = true;
  for (int rep = 0; rep < 1000 && ok; ++rep) {
    LabelMask a(8, 8), b(8, 8);
    for (auto& c : a.classes) c = static_cast<uint8_t>(rng.uniform_int(0, 3));
    for (auto& c : b.classes) c = static_cast<uint8_t>(rng.uniform_int(0, 3));
    const auto rep_fast = metrics::miou(a, b, 4);
    // brute-force per-pixel set counting
    double acc = 0.0;
    int present = 0;
    for (int c = 0; c < 4; ++c) {
      int64_t inter = 0, uni = 0;
      for (int i = 0; i < 64; ++i) {
        const bool in_a = a.classes[static_cast<size_t>(i)] == c;
        const bool in_b = b.classes[static_cast<size_t>(i)] == c;
        inter += in_a && in_b;
        uni += in_a || in_b;
      }
      if (uni > 0) {
        acc += static_cast<double>(inter) / static_cast<double>(uni);
        ++present;
      }
    }
    const double expected = present ? acc / present : 0.0;
    if (rep_fast.mean_iou != expected) ok = false;
  }
  report(6, "miou equals brute-force set counting on 1000 random mask pairs", ok);
}

// ---- 7: polygon fill oracle ----

bool oracle_point_in_polygon(const std::vector<std::pair<double, double>>& poly, double px,
                             double py) {
  bool inside = false;
  for (size_t i = 0; i < poly.size(); ++i) {
    const auto& [ax, ay] = poly[i];
    const auto& [bx, by] = poly[(i + 1) % poly.size()];
    if ((ay > py) != (by > py)) {
      const double xint = ax + (py - ay) / (by - ay) * (bx - ax);
      if (xint > px) inside = !inside;
    }
  }
  return inside;
}

void criterion_polygon_oracle() {
  Rng rng(707);
  bool ok = true;
  for (int rep = 0; rep < 50 && ok; ++rep) {
    const int n = static_cast<int>(rng.uniform_int(3, 8));
    const double cx = rng.uniform(12.0, 52.0);
    const double cy = rng.uniform(12.0, 52.0);
    const double radius = rng.uniform(4.0, 11.0);
    std::vector<double> angles;
    for (int i = 0; i < n; ++i) angles.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
    std::sort(angles.begin(), angles.end());
    std::vector<std::pair<double, double>> poly;
    for (double a : angles)
      poly.emplace_back(cx + radius * std::cos(a), cy + radius * std::sin(a));

    data::LandmarkSet lm;
    lm.points.assign(68, {1.0, 1.0});
    for (size_t i = 0; i < poly.size(); ++i) lm.points[i] = poly[i];
    data::RegionDefinition regions;
    data::RegionBoundary boundary;
    boundary.class_id = 1;
    boundary.name = "poly";
    for (int i = 0; i < n; ++i) boundary.landmark_indices.push_back(i);
    regions.push_back(boundary);

    LabelMask mask = data::landmarks_to_mask(lm, regions, 64, 64);
    for (int y = 0; y < 64 && ok; ++y)
      for (int x = 0; x < 64; ++x)
        if (static_cast<bool>(mask.at(y, x)) != oracle_point_in_polygon(poly, x + 0.5, y + 0.5)) {
          ok = false;
          break;
        }
  }
  report(7, "scanline fill equals even-odd point-in-polygon on 50 convex polygons", ok);
}

// ---- 8: byte-level determinism of the CLI ----

struct CliRun {
  int exit_code;
  std::string out;
};

CliRun run_cli(const std::string& args, const fs::path& capture) {
  const std::string cmd = std::string(SAMCL_CLI_PATH) + " " + args + " > " + capture.string() +
                          " 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.exit_code = WEXITSTATUS(status);
  std::ifstream is(capture);
  std::ostringstream buf;
  buf << is.rdbuf();
  r.out = buf.str();
  return r;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

void criterion_determinism() {
  const fs::path dir = fs::temp_directory_path() / "samcl_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path capture = dir / "out.txt";
  bool ok = true;
  std::string detail;

  // synth-data twice
  ok = ok && run_cli("synth-data --out " + (dir / "a").string() + " --count 8 --seed 11",
                     capture).exit_code == 0;
  ok = ok && run_cli("synth-data --out " + (dir / "b").string() + " --count 8 --seed 11",
                     capture).exit_code == 0;
  if (ok)
    for (const auto& e : fs::directory_iterator(dir / "a")) {
      if (read_bytes(e.path()) != read_bytes(dir / "b" / e.path().filename())) {
        ok = false;
        detail = "synth-data bytes differ";
      }
    }

  // augment twice
  if (ok) {
    const std::string img = (dir / "a" / "img_00000.thrm").string();
    const std::string mask = (dir / "a" / "mask_00000.pgm").string();
    ok = run_cli("augment --in " + img + " --mask " + mask + " --out " + (dir / "g1").string() +
                     " --seed 21",
                 capture).exit_code == 0 &&
         run_cli("augment --in " + img + " --mask " + mask + " --out " + (dir / "g2").string() +
                     " --seed 21",
                 capture).exit_code == 0;
    for (const char* f : {"preview.pgm", "mask.pgm", "params.json", "histogram.csv"})
      if (ok && read_bytes(dir / "g1" / f) != read_bytes(dir / "g2" / f)) {
        ok = false;
        detail = std::string("augment bytes differ: ") + f;
      }
  }

  // 3-epoch training twice, with different augmentation worker counts
  if (ok) {
    const fs::path cfg = dir / "train_cfg.json";
    {
      std::ofstream os(cfg);
      os << R"({
        "synthetic": {"height": 32, "width": 32, "num_subjects": 5, "frames_per_subject": 3},
        "data": {"train_subjects": 3, "val_subjects": 2},
        "net": {"base_channels": 4},
        "train": {"batch_size": 6, "epochs": 3, "loss_mode": "rmi+tiaug", "seed": 31}
      })";
    }
    ok = run_cli("train --config " + cfg.string() + " --out " + (dir / "t1").string() +
                     " --workers 1",
                 capture).exit_code == 0 &&
         run_cli("train --config " + cfg.string() + " --out " + (dir / "t2").string() +
                     " --workers 4",
                 capture).exit_code == 0;
    for (const char* f : {"checkpoint.sckp", "metrics.csv"})
      if (ok && read_bytes(dir / "t1" / f) != read_bytes(dir / "t2" / f)) {
        ok = false;
        detail = std::string("train bytes differ: ") + f;
      }
  }

  report(8, "synth-data, augment, and 3-epoch training are byte-identical across runs", ok,
         detail);
  fs::remove_all(dir);
}

// ---- 9: ablation trend ----

void criterion_trend() {
  const auto start = Clock::now();
  config::RunConfig cfg = config::default_run_config();
  // 20 train + 5 val subjects x 10 frames = 200/50 images at 64x64, C=6
  train::TrainData data = config::build_dataset(cfg);
  const bool sizes_ok = data.train_images.size() == 200 && data.val_images.size() == 50;

  train::AblationResult result = train::ablation(
      cfg.train,
      {train::LossMode::kRmi, train::LossMode::kRmiTiaug, train::LossMode::kRmiTiaugSamcl},
      {1, 2, 3}, data);
  std::printf("%s", train::ablation_table(result).c_str());

  const double rmi = result.rows[0].occluded_mean;
  const double tiaug = result.rows[1].occluded_mean;
  const double samcl = result.rows[2].occluded_mean;
  const bool ordered = samcl >= tiaug && tiaug >= rmi;
  const bool gap = (samcl - rmi) >= 0.02;  // two mIoU points
  char detail[220];
  std::snprintf(detail, sizeof(detail),
                "occluded mIoU%%: rmi %.2f, +tiaug %.2f, +samcl %.2f (gap %.2f pts); %.1f min",
                100.0 * rmi, 100.0 * tiaug, 100.0 * samcl, 100.0 * (samcl - rmi),
                elapsed(start) / 60.0);
  report(9, "occluded-validation mIoU improves monotonically across the ablation",
         sizes_ok && ordered && gap, detail);
}

// ---- 10: inference purity ----

// Transitive include scan: nothing reachable from the inference entrypoints
// may pull in the augmentation or training-loss machinery.
void criterion_inference_purity() {
  const fs::path root = SAMCL_SOURCE_DIR;
  const std::set<std::string> forbidden = {"tiaug.hpp", "loss.hpp", "train.hpp", "config.hpp",
                                           "gradcheck.hpp"};
  std::set<std::string> visited;
  std::vector<fs::path> queue = {root / "src" / "eval.cpp", root / "include" / "samcl" / "eval.hpp",
                                 root / "src" / "nn.cpp", root / "include" / "samcl" / "nn.hpp",
                                 root / "src" / "metrics.cpp",
                                 root / "include" / "samcl" / "metrics.hpp"};
  bool ok = true;
  std::string offender;
  while (!queue.empty() && ok) {
    const fs::path file = queue.back();
    queue.pop_back();
    if (!visited.insert(file.filename().string()).second) continue;
    std::ifstream is(file);
    if (!is) continue;
    std::string line;
    while (std::getline(is, line)) {
      const auto pos = line.find("#include \"samcl/");
      if (pos == std::string::npos) continue;
      const auto name = line.substr(pos + 16, line.find('"', pos + 16) - pos - 16);
      if (forbidden.count(name)) {
        ok = false;
        offender = file.filename().string() + " includes samcl/" + name;
        break;
      }
      queue.push_back(root / "include" / "samcl" / name);
      const fs::path impl = root / "src" / (name.substr(0, name.size() - 4) + ".cpp");
      if (fs::exists(impl)) queue.push_back(impl);
    }
  }
  report(10, "eval/predict code path has no dependency on the augmentation or contrastive loss",
         ok, offender);
}

}  // namespace

int main() {
  const auto start = Clock::now();
  criterion_gradients();
  criterion_derangements();
  criterion_triplet();
  criterion_netd();
  criterion_hot_cold();
  criterion_miou_oracle();
  criterion_polygon_oracle();
  criterion_determinism();
  criterion_trend();
  criterion_inference_purity();
  std::printf("acceptance: %d/10 criteria passed (%.1f min total)\n", 10 - failures,
              elapsed(start) / 60.0);
  return failures == 0 ? 0 : 1;
}
