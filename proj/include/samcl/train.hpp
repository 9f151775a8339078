#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "samcl/loss.hpp"
#include "samcl/metrics.hpp"
#include "samcl/nn.hpp"
#include "samcl/optim.hpp"
#include "samcl/tiaug.hpp"

namespace samcl::train {

enum class LossMode { kBce, kDice, kRmi, kRmiTiaug, kRmiTiaugSamcl };

const char* loss_mode_name(LossMode mode);
LossMode loss_mode_from_name(const std::string& name);
bool mode_uses_tiaug(LossMode mode);   // occluder synthesis + thermal noise
bool mode_uses_samcl(LossMode mode);   // contrastive loss + auxiliary network

struct TrainConfig {
  int batch_size = 16;
  double learning_rate = 1e-3;
  int epochs = 20;
  LossMode loss_mode = LossMode::kRmi;
  OptimizerConfig optimizer;  // betas 0.9/0.999, weight decay 1e-8
  double lambda_samcl = 1.0;  // weight of the contrastive term on top of the base loss
  uint64_t seed = 0;
  int aug_workers = 1;
  tiaug::AugConfig aug;       // geometric part applies in every mode; occluders
                              // and noise only when the mode enables them
  loss::LossConfig loss_cfg;
  nn::UNetConfig net;
  std::vector<double> bce_class_weights;  // empty means all ones
  uint64_t eval_aug_seed = 9001;
  tiaug::AugConfig eval_aug;  // occluded-validation variant (temperature only)

  void validate() const;
};

struct TrainData {
  std::vector<ThermalImage> train_images;
  std::vector<LabelMask> train_masks;
  std::vector<ThermalImage> val_images;
  std::vector<LabelMask> val_masks;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  metrics::EvalReport val;
};

struct TrainResult {
  nn::ModelParams params;  // best-validation snapshot
  std::vector<std::pair<std::string, Tensor>> aux_params;
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_miou = 0.0;
  double clean_val_miou = 0.0;
  double occluded_val_miou = 0.0;
};

// Mean over pixels and channels of class-weighted binary cross-entropy on
// sigmoided logits.
Tensor weighted_bce_loss(const Tensor& logits, const Tensor& target_onehot,
                         std::span<const double> class_weights);

// 1 - mean over classes of 2*sum(p*t) / (sum p + sum t + eps), p = softmax.
Tensor dice_loss(const Tensor& logits, const Tensor& target_onehot);

// Full training loop: Xavier init, shuffled batches, mode-gated augmentation,
// the configured loss (the contrastive mode adds lambda_samcl * samcl_loss on
// top of the base segmentation loss), per-epoch validation, best-checkpoint
// tracking. Deterministic for a fixed (config, data, seed) at any worker
// count. A non-finite loss aborts with a diagnostic.
TrainResult train(const TrainConfig& cfg, const TrainData& data);

// Validation images with seeded occluders and noise (no geometry, so masks
// stay aligned); identical across modes so robustness is compared fairly.
std::vector<ThermalImage> occluded_validation(const std::vector<ThermalImage>& images,
                                              const std::vector<LabelMask>& masks,
                                              const tiaug::AugConfig& eval_aug, uint64_t seed);

struct AblationRow {
  LossMode mode;
  std::vector<double> clean_miou;     // per seed
  std::vector<double> occluded_miou;  // per seed
  double clean_mean = 0.0, clean_std = 0.0;
  double occluded_mean = 0.0, occluded_std = 0.0;
};

struct AblationResult {
  std::vector<uint64_t> seeds;
  std::vector<AblationRow> rows;
};

// Runs every (mode, seed) pair on the shared dataset.
AblationResult ablation(const TrainConfig& base, const std::vector<LossMode>& modes,
                        const std::vector<uint64_t>& seeds, const TrainData& data);

void write_metrics_csv(const std::string& path, const TrainResult& result, int num_classes);
void write_ablation_csv(const std::string& path, const AblationResult& result);
std::string ablation_table(const AblationResult& result);

}  // namespace samcl::train
