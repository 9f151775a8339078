#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "samcl/config.hpp"
#include "samcl/errors.hpp"
#include "samcl/gradcheck.hpp"
#include "samcl/loss.hpp"
#include "samcl/metrics.hpp"
#include "samcl/rng.hpp"
#include "samcl/train.hpp"

using namespace samcl;
using namespace samcl::train;

namespace {

LabelMask random_mask(int h, int w, int num_classes, Rng& rng) {
  LabelMask mask(h, w);
  for (auto& c : mask.classes)
    c = static_cast<uint8_t>(rng.uniform_int(0, num_classes - 1));
  return mask;
}

Tensor saturated_logits(const LabelMask& mask, int num_classes, double amp) {
  Tensor onehot = loss::one_hot(mask, num_classes);
  Tensor logits = Tensor::zeros(onehot.shape(), true);
  auto lv = logits.mutable_values();
  const auto ov = onehot.values();
  for (size_t i = 0; i < lv.size(); ++i) lv[i] = ov[i] > 0.5 ? amp : -amp;
  return logits;
}

// Small, fast synthetic dataset: 32x32, 3 subjects each side.
config::RunConfig tiny_run_config() {
  config::RunConfig cfg = config::default_run_config();
  cfg.synthetic.height = 32;
  cfg.synthetic.width = 32;
  cfg.train_subjects = 3;
  cfg.val_subjects = 2;
  cfg.frames_per_subject = 4;
  cfg.train.net.base_channels = 4;
  cfg.train.batch_size = 6;
  cfg.train.epochs = 1;
  return cfg;
}

}  // namespace

TEST_CASE("weighted bce vanishes on saturated-correct predictions") {
  Rng rng(1);
  LabelMask mask = random_mask(8, 8, 3, rng);
  Tensor target = loss::one_hot(mask, 3);
  Tensor logits = saturated_logits(mask, 3, 14.0);
  const std::vector<double> ones = {1.0, 1.0, 1.0};
  CHECK(weighted_bce_loss(logits, target, ones).value() == doctest::Approx(0.0).epsilon(1e-3));
  CHECK(weighted_bce_loss(logits, target, ones).value() >= 0.0);
}

TEST_CASE("unit weights reduce weighted bce to plain bce") {
  Rng rng(2);
  LabelMask mask = random_mask(6, 6, 2, rng);
  Tensor target = loss::one_hot(mask, 2);
  Tensor logits = Tensor::zeros({1, 2, 6, 6}, true);
  for (auto& v : logits.mutable_values()) v = rng.uniform(-2.0, 2.0);
  const std::vector<double> ones = {1.0, 1.0};
  const double weighted = weighted_bce_loss(logits, target, ones).value();
  const double plain = mean(bce_with_logits(logits, target)).value();
  CHECK(weighted == doctest::Approx(plain).epsilon(1e-12));
  const std::vector<double> bad = {1.0, 0.0};
  CHECK_THROWS_AS(weighted_bce_loss(logits, target, bad), ContractError);
}

TEST_CASE("weighted bce gradient matches finite differences") {
  Rng rng(3);
  LabelMask mask = random_mask(6, 6, 3, rng);
  Tensor target = loss::one_hot(mask, 3);
  Tensor logits = Tensor::zeros({1, 3, 6, 6}, true);
  for (auto& v : logits.mutable_values()) v = rng.uniform(-1.5, 1.5);
  const std::vector<double> weights = {0.5, 2.0, 1.0};
  CHECK(finite_diff_max_rel_err(
            [&] { return weighted_bce_loss(logits, target, weights); }, {logits}) < 1e-4);
}

TEST_CASE("dice loss vanishes on the exact match and is permutation invariant") {
  Rng rng(4);
  LabelMask mask = random_mask(8, 8, 3, rng);
  Tensor target = loss::one_hot(mask, 3);
  Tensor logits = saturated_logits(mask, 3, 16.0);
  CHECK(dice_loss(logits, target).value() == doctest::Approx(0.0).epsilon(1e-3));
  CHECK(dice_loss(logits, target).value() >= 0.0);
}

TEST_CASE("dice loss on uniform predictions matches the hand-evaluated formula") {
  // 2x2 image, C=2, target: 3 pixels class 0, 1 pixel class 1; p = 1/2
  LabelMask mask(2, 2, 0);
  mask.at(1, 1) = 1;
  Tensor target = loss::one_hot(mask, 2);
  Tensor logits = Tensor::zeros({1, 2, 2, 2}, true);
  // per class: dice_c = 2 * (n_c/2) / (HW/2 + n_c + eps)
  const double eps = 1e-6;
  const double dice0 = 2.0 * (3.0 / 2.0) / (2.0 + 3.0 + eps);
  const double dice1 = 2.0 * (1.0 / 2.0) / (2.0 + 1.0 + eps);
  const double expected = 1.0 - 0.5 * (dice0 + dice1);
  CHECK(dice_loss(logits, target).value() == doctest::Approx(expected).epsilon(1e-9));

  // permuting pixel order leaves the loss unchanged
  LabelMask perm(2, 2, 0);
  perm.at(0, 0) = 1;  // the single class-1 pixel moved
  Tensor target2 = loss::one_hot(perm, 2);
  CHECK(dice_loss(logits, target2).value() ==
        doctest::Approx(dice_loss(logits, target).value()).epsilon(1e-12));
}

TEST_CASE("dice gradient matches finite differences") {
  Rng rng(5);
  LabelMask mask = random_mask(6, 6, 2, rng);
  Tensor target = loss::one_hot(mask, 2);
  Tensor logits = Tensor::zeros({1, 2, 6, 6}, true);
  for (auto& v : logits.mutable_values()) v = rng.uniform(-1.5, 1.5);
  CHECK(finite_diff_max_rel_err([&] { return dice_loss(logits, target); }, {logits}) < 1e-4);
}

TEST_CASE("miou exact cases") {
  LabelMask m(4, 4, 0);
  m.at(0, 0) = 1;
  m.at(2, 3) = 2;
  auto self = metrics::miou(m, m, 6);
  CHECK(self.mean_iou == doctest::Approx(1.0));
  CHECK(self.pixel_accuracy == doctest::Approx(1.0));

  // disjoint binary masks: both IoUs zero
  LabelMask gt(2, 2), pred(2, 2);
  gt.classes = {0, 0, 1, 1};
  pred.classes = {1, 1, 0, 0};
  auto rep = metrics::miou(pred, gt, 2);
  CHECK(rep.mean_iou == doctest::Approx(0.0));
  CHECK(rep.per_class_iou[0] == doctest::Approx(0.0));
  CHECK(rep.per_class_iou[1] == doctest::Approx(0.0));
}

TEST_CASE("miou is symmetric and matches brute-force set counting") {
  Rng rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    LabelMask a = random_mask(8, 8, 4, rng);
    LabelMask b = random_mask(8, 8, 4, rng);
    auto r1 = metrics::miou(a, b, 4);
    auto r2 = metrics::miou(b, a, 4);
    CHECK(r1.mean_iou == doctest::Approx(r2.mean_iou).epsilon(1e-15));
    // brute force: per class, count membership pixel by pixel
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
        present += 1;
      }
    }
    const double expected = present ? acc / present : 0.0;
    REQUIRE(r1.mean_iou == doctest::Approx(expected).epsilon(1e-15));
  }
}

TEST_CASE("one training epoch completes with finite losses") {
  config::RunConfig cfg = tiny_run_config();
  TrainData data = config::build_dataset(cfg);
  REQUIRE(data.train_images.size() == 12);
  REQUIRE(data.val_images.size() == 8);
  TrainResult result = train::train(cfg.train, data);
  REQUIRE(result.history.size() == 1);
  CHECK(std::isfinite(result.history[0].train_loss));
  CHECK(result.best_val_miou >= 0.0);
  CHECK(result.best_val_miou <= 1.0);
  CHECK(result.params.parameter_count() > 0);
}

TEST_CASE("training loss decreases from the first epoch to the fifth") {
  config::RunConfig cfg = tiny_run_config();
  cfg.train.epochs = 5;
  TrainData data = config::build_dataset(cfg);
  TrainResult result = train::train(cfg.train, data);
  REQUIRE(result.history.size() == 5);
  CHECK(result.history[4].train_loss < result.history[0].train_loss);
}

TEST_CASE("identical seeds give identical training results at any worker count") {
  config::RunConfig cfg = tiny_run_config();
  cfg.train.epochs = 2;
  cfg.train.loss_mode = LossMode::kRmiTiaug;
  TrainData data = config::build_dataset(cfg);

  cfg.train.seed = 42;
  cfg.train.aug_workers = 1;
  TrainResult a = train::train(cfg.train, data);
  cfg.train.aug_workers = 4;
  TrainResult b = train::train(cfg.train, data);
  REQUIRE(a.params.named.size() == b.params.named.size());
  for (size_t i = 0; i < a.params.named.size(); ++i) {
    const auto va = a.params.named[i].second.values();
    const auto vb = b.params.named[i].second.values();
    REQUIRE(va.size() == vb.size());
    for (size_t j = 0; j < va.size(); ++j) REQUIRE(va[j] == vb[j]);
  }
  CHECK(a.best_val_miou == b.best_val_miou);
  CHECK(a.occluded_val_miou == b.occluded_val_miou);
}

TEST_CASE("samcl mode trains the auxiliary network jointly") {
  config::RunConfig cfg = tiny_run_config();
  cfg.train.loss_mode = LossMode::kRmiTiaugSamcl;
  TrainData data = config::build_dataset(cfg);
  TrainResult result = train::train(cfg.train, data);
  REQUIRE(result.aux_params.size() == 6);  // 3 layers x (weight, bias)
  // aux weights moved away from their init (they receive gradients)
  Rng aux_rng(mix_seed(cfg.train.seed, {2}));
  loss::AuxNet init = loss::build_auxnet(cfg.train.net.num_classes, aux_rng);
  bool changed = false;
  const auto trained = result.aux_params[0].second.values();
  const auto initial = init.named[0].second.values();
  for (size_t i = 0; i < trained.size(); ++i)
    if (trained[i] != initial[i]) changed = true;
  CHECK(changed);
}

TEST_CASE("occluded validation perturbs temperatures but never the masks") {
  config::RunConfig cfg = tiny_run_config();
  TrainData data = config::build_dataset(cfg);
  auto occluded = occluded_validation(data.val_images, data.val_masks, cfg.train.eval_aug, 7);
  REQUIRE(occluded.size() == data.val_images.size());
  for (size_t i = 0; i < occluded.size(); ++i) {
    CHECK(occluded[i].height == data.val_images[i].height);
    CHECK(occluded[i].width == data.val_images[i].width);
  }
  // deterministic per seed
  auto again = occluded_validation(data.val_images, data.val_masks, cfg.train.eval_aug, 7);
  for (size_t i = 0; i < occluded.size(); ++i) CHECK(occluded[i].values == again[i].values);
}

TEST_CASE("ablation produces one row per mode with per-seed columns") {
  config::RunConfig cfg = tiny_run_config();
  TrainData data = config::build_dataset(cfg);
  auto result = ablation(cfg.train, {LossMode::kRmi, LossMode::kRmiTiaug}, {11}, data);
  REQUIRE(result.rows.size() == 2);
  CHECK(result.rows[0].mode == LossMode::kRmi);
  CHECK(result.rows[0].clean_miou.size() == 1);
  CHECK(result.rows[0].clean_std == 0.0);  // single seed
  CHECK(result.rows[0].occluded_std == 0.0);
  std::string table = ablation_table(result);
  CHECK(table.find("rmi") != std::string::npos);
}

TEST_CASE("config parsing reports JSON-pointer paths") {
  CHECK_THROWS_WITH_AS(config::parse_run_config(R"({"train": {"batch_size": 0}})"),
                       doctest::Contains("/train/batch_size"), ConfigError);
  CHECK_THROWS_WITH_AS(config::parse_run_config(R"({"train": {"unknown_field": 1}})"),
                       doctest::Contains("/train/unknown_field"), ConfigError);
  CHECK_THROWS_WITH_AS(config::parse_run_config(R"({"bogus_section": {}})"),
                       doctest::Contains("/bogus_section"), ConfigError);
  CHECK_THROWS_WITH_AS(config::parse_run_config(R"({"train": {"loss_mode": "nonsense"}})"),
                       doctest::Contains("/train/loss_mode"), ConfigError);
  CHECK_THROWS_AS(config::parse_run_config("not json"), ConfigError);

  // defaults round-trip through the dump
  config::RunConfig def = config::default_run_config();
  config::RunConfig parsed = config::parse_run_config(config::dump_run_config(def));
  CHECK(parsed.train.batch_size == def.train.batch_size);
  CHECK(parsed.train.net.base_channels == def.train.net.base_channels);
  CHECK(parsed.ablate_modes.size() == def.ablate_modes.size());
}

TEST_CASE("loss mode names round-trip") {
  for (LossMode m : {LossMode::kBce, LossMode::kDice, LossMode::kRmi, LossMode::kRmiTiaug,
                     LossMode::kRmiTiaugSamcl})
    CHECK(loss_mode_from_name(loss_mode_name(m)) == m);
  CHECK_THROWS_AS(loss_mode_from_name("rmi+bogus"), ContractError);
  CHECK(mode_uses_tiaug(LossMode::kRmiTiaug));
  CHECK(mode_uses_samcl(LossMode::kRmiTiaugSamcl));
  CHECK_FALSE(mode_uses_samcl(LossMode::kRmiTiaug));
  CHECK_FALSE(mode_uses_tiaug(LossMode::kRmi));
}
