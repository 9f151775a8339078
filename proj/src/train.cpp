#include "samcl/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "samcl/errors.hpp"
#include "samcl/eval.hpp"

namespace samcl::train {

const char* loss_mode_name(LossMode mode) {
  switch (mode) {
    case LossMode::kBce: return "bce";
    case LossMode::kDice: return "dice";
    case LossMode::kRmi: return "rmi";
    case LossMode::kRmiTiaug: return "rmi+tiaug";
    case LossMode::kRmiTiaugSamcl: return "rmi+tiaug+samcl";
  }
  throw ContractError("loss_mode_name: invalid mode");
}

LossMode loss_mode_from_name(const std::string& name) {
  if (name == "bce") return LossMode::kBce;
  if (name == "dice") return LossMode::kDice;
  if (name == "rmi") return LossMode::kRmi;
  if (name == "rmi+tiaug") return LossMode::kRmiTiaug;
  if (name == "rmi+tiaug+samcl") return LossMode::kRmiTiaugSamcl;
  throw ContractError("loss_mode_from_name: unknown mode '" + name + "'");
}

bool mode_uses_tiaug(LossMode mode) {
  return mode == LossMode::kRmiTiaug || mode == LossMode::kRmiTiaugSamcl;
}

bool mode_uses_samcl(LossMode mode) { return mode == LossMode::kRmiTiaugSamcl; }

void TrainConfig::validate() const {
  if (batch_size < 1) throw ContractError("TrainConfig: batch_size must be >= 1");
  if (epochs < 1) throw ContractError("TrainConfig: epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ContractError("TrainConfig: learning_rate must be > 0");
  if (lambda_samcl < 0.0) throw ContractError("TrainConfig: lambda_samcl must be >= 0");
  if (aug_workers < 1) throw ContractError("TrainConfig: aug_workers must be >= 1");
  if (!bce_class_weights.empty()) {
    if (static_cast<int>(bce_class_weights.size()) != net.num_classes)
      throw ContractError("TrainConfig: bce_class_weights must have one entry per class");
    for (double w : bce_class_weights)
      if (!(w > 0.0)) throw ContractError("TrainConfig: bce_class_weights must be positive");
  }
  net.validate();
  loss_cfg.validate();
  aug.validate();
  eval_aug.validate();
}

Tensor weighted_bce_loss(const Tensor& logits, const Tensor& target_onehot,
                         std::span<const double> class_weights) {
  const auto& s = logits.shape();
  if (s.size() != 4 || target_onehot.shape() != s)
    throw ContractError("weighted_bce_loss: logits and target shapes must match");
  const int C = s[1];
  if (static_cast<int>(class_weights.size()) != C)
    throw ContractError("weighted_bce_loss: need " + std::to_string(C) + " class weights, got " +
                        std::to_string(class_weights.size()));
  for (double w : class_weights)
    if (!(w > 0.0)) throw ContractError("weighted_bce_loss: class weights must be positive");
  Tensor weight_map = Tensor::zeros(s);
  {
    auto wv = weight_map.mutable_values();
    const int64_t plane = static_cast<int64_t>(s[2]) * s[3];
    for (int n = 0; n < s[0]; ++n)
      for (int c = 0; c < C; ++c)
        std::fill(wv.begin() + (static_cast<int64_t>(n) * C + c) * plane,
                  wv.begin() + (static_cast<int64_t>(n) * C + c + 1) * plane,
                  class_weights[static_cast<size_t>(c)]);
  }
  return mean(mul(bce_with_logits(logits, target_onehot), weight_map));
}

Tensor dice_loss(const Tensor& logits, const Tensor& target_onehot) {
  const auto& s = logits.shape();
  if (s.size() != 4 || target_onehot.shape() != s)
    throw ContractError("dice_loss: logits and target shapes must match");
  constexpr double kEps = 1e-6;  // guards classes absent from the batch
  Tensor p = softmax_channels(logits);
  Tensor numer = mul_scalar(sum_per_channel(mul(p, target_onehot)), 2.0);
  Tensor denom = add_scalar(add(sum_per_channel(p), sum_per_channel(target_onehot)), kEps);
  return add_scalar(mul_scalar(mean(div(numer, denom)), -1.0), 1.0);
}

namespace {

struct PreparedSample {
  ThermalImage image;  // normalized, network input size
  LabelMask mask;
};

// Per-sample seeds make the result independent of the worker count.
void augment_for_training(const TrainData& data, const tiaug::AugConfig& aug, uint64_t run_seed,
                          int epoch, std::span<const size_t> indices, int workers, int net_h,
                          int net_w, std::vector<PreparedSample>& out) {
  out.resize(indices.size());
  auto process = [&](size_t slot) {
    const size_t idx = indices[slot];
    Rng rng(mix_seed(run_seed, {4, static_cast<uint64_t>(epoch), static_cast<uint64_t>(idx)}));
    tiaug::AugSample s =
        tiaug::augment(data.train_images[idx], data.train_masks[idx], aug, rng);
    // resize-as-augmentation is folded back to the network input size
    if (s.image.height != net_h || s.image.width != net_w) {
      s.image = tiaug::resize_bilinear(s.image, net_h, net_w);
      s.mask = tiaug::resize_nearest(s.mask, net_h, net_w);
    }
    out[slot] = {std::move(s.image), std::move(s.mask)};
  };
  if (workers <= 1 || indices.size() <= 1) {
    for (size_t slot = 0; slot < indices.size(); ++slot) process(slot);
    return;
  }
  const int n_threads = std::min<int>(workers, static_cast<int>(indices.size()));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t)
    pool.emplace_back([&, t] {
      for (size_t slot = static_cast<size_t>(t); slot < indices.size();
           slot += static_cast<size_t>(n_threads))
        process(slot);
    });
  for (auto& th : pool) th.join();
}

std::vector<std::vector<double>> snapshot_values(const std::vector<Tensor>& tensors) {
  std::vector<std::vector<double>> snap;
  snap.reserve(tensors.size());
  for (const auto& t : tensors)
    snap.emplace_back(t.values().begin(), t.values().end());
  return snap;
}

double population_std(const std::vector<double>& v, double mean) {
  if (v.size() <= 1) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace

std::vector<ThermalImage> occluded_validation(const std::vector<ThermalImage>& images,
                                              const std::vector<LabelMask>& masks,
                                              const tiaug::AugConfig& eval_aug, uint64_t seed) {
  if (images.size() != masks.size())
    throw ContractError("occluded_validation: images and masks must pair up");
  tiaug::AugConfig cfg = eval_aug;
  // temperature-domain perturbations only; masks must stay aligned
  cfg.hflip_enabled = false;
  cfg.vflip_enabled = false;
  cfg.rotation_enabled = false;
  cfg.blur_enabled = false;
  cfg.resize_enabled = false;
  std::vector<ThermalImage> out;
  out.reserve(images.size());
  for (size_t i = 0; i < images.size(); ++i) {
    Rng rng(mix_seed(seed, {static_cast<uint64_t>(i)}));
    out.push_back(tiaug::augment(images[i], masks[i], cfg, rng).image);
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const TrainData& data) {
  cfg.validate();
  if (data.train_images.empty() || data.train_images.size() != data.train_masks.size())
    throw ContractError("train: empty or mismatched training data");
  if (data.val_images.empty() || data.val_images.size() != data.val_masks.size())
    throw ContractError("train: empty or mismatched validation data");
  const int C = cfg.net.num_classes;
  const int net_h = data.train_images[0].height;
  const int net_w = data.train_images[0].width;

  const bool use_tiaug = mode_uses_tiaug(cfg.loss_mode);
  const bool use_samcl = mode_uses_samcl(cfg.loss_mode);

  tiaug::AugConfig aug = cfg.aug;
  if (!use_tiaug) {
    aug.occluders_enabled = false;
    aug.noise_enabled = false;
  }

  Rng init_rng(mix_seed(cfg.seed, {1}));
  nn::ModelParams params = nn::build_unet(cfg.net, init_rng);
  loss::AuxNet aux;
  if (use_samcl) {
    Rng aux_rng(mix_seed(cfg.seed, {2}));
    aux = loss::build_auxnet(C, aux_rng);
  }

  std::vector<Tensor> opt_params = params.tensors();
  if (use_samcl)
    for (auto& t : aux.tensors()) opt_params.push_back(t);
  OptimizerConfig ocfg = cfg.optimizer;
  ocfg.learning_rate = cfg.learning_rate;
  OptimizerState state;
  init_optimizer_state(opt_params, state);

  std::vector<double> bce_weights = cfg.bce_class_weights;
  if (bce_weights.empty()) bce_weights.assign(static_cast<size_t>(C), 1.0);

  Rng swap_rng(mix_seed(cfg.seed, {5}));

  TrainResult result;
  double best_miou = -1.0;
  std::vector<std::vector<double>> best_values;

  std::vector<size_t> order(data.train_images.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<PreparedSample> batch_samples;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, {3, static_cast<uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int steps = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      augment_for_training(data, aug, cfg.seed, epoch, {order.data() + start, end - start},
                           cfg.aug_workers, net_h, net_w, batch_samples);

      std::vector<const ThermalImage*> images;
      std::vector<const LabelMask*> masks;
      for (const auto& s : batch_samples) {
        images.push_back(&s.image);
        masks.push_back(&s.mask);
      }
      Tensor x = nn::image_batch(images);
      Tensor y_pos = loss::one_hot_batch(masks, C);
      Tensor logits = nn::unet_forward(params, x);

      Tensor total;
      if (use_samcl) {
        loss::SwappedMask y_neg = loss::class_swap(y_pos, swap_rng);
        // base RMI plus the contrastive sum; d(anchor, positive) is one shared node
        loss::SamclTerms terms =
            loss::samcl_loss_terms(logits, y_pos, y_neg.tensor, aux, cfg.loss_cfg);
        total = add(terms.rmi_positive, mul_scalar(terms.total, cfg.lambda_samcl));
      } else {
        switch (cfg.loss_mode) {
          case LossMode::kBce:
            total = weighted_bce_loss(logits, y_pos, bce_weights);
            break;
          case LossMode::kDice:
            total = dice_loss(logits, y_pos);
            break;
          default:
            total = loss::rmi_distance(logits, y_pos, cfg.loss_cfg);
            break;
        }
      }
      const double loss_value = total.value();
      if (!std::isfinite(loss_value))
        throw NumericError("train: loss diverged to " + std::to_string(loss_value) +
                           " at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(steps + 1) + " (mode " +
                           loss_mode_name(cfg.loss_mode) + ")");
      for (auto& t : opt_params) t.zero_grad();
      backward(total);
      optimizer_step(opt_params, ocfg, state);
      loss_sum += loss_value;
      ++steps;
    }

    metrics::EvalReport val = evaluate_model(params, data.val_images, data.val_masks,
                                             cfg.batch_size);
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / std::max(1, steps);
    stats.val = val;
    result.history.push_back(stats);

    if (val.mean_iou > best_miou) {
      best_miou = val.mean_iou;
      result.best_epoch = epoch;
      best_values = snapshot_values(opt_params);
    }
  }

  // materialize the best snapshot
  result.best_val_miou = best_miou;
  result.params.config = cfg.net;
  size_t slot = 0;
  for (const auto& [name, t] : params.named) {
    result.params.named.emplace_back(
        name, Tensor::from_data(t.shape(), best_values[slot++], true));
  }
  if (use_samcl)
    for (const auto& [name, t] : aux.named)
      result.aux_params.emplace_back(name,
                                     Tensor::from_data(t.shape(), best_values[slot++], true));

  result.clean_val_miou =
      evaluate_model(result.params, data.val_images, data.val_masks, cfg.batch_size).mean_iou;
  const auto occluded =
      occluded_validation(data.val_images, data.val_masks, cfg.eval_aug, cfg.eval_aug_seed);
  result.occluded_val_miou =
      evaluate_model(result.params, occluded, data.val_masks, cfg.batch_size).mean_iou;
  return result;
}

AblationResult ablation(const TrainConfig& base, const std::vector<LossMode>& modes,
                        const std::vector<uint64_t>& seeds, const TrainData& data) {
  if (modes.size() < 2) throw ContractError("ablation: need at least 2 loss modes");
  if (seeds.empty()) throw ContractError("ablation: need at least 1 seed");
  AblationResult result;
  result.seeds = seeds;
  for (LossMode mode : modes) {
    AblationRow row;
    row.mode = mode;
    for (uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.loss_mode = mode;
      cfg.seed = seed;
      TrainResult r = train(cfg, data);
      row.clean_miou.push_back(r.clean_val_miou);
      row.occluded_miou.push_back(r.occluded_val_miou);
    }
    row.clean_mean = std::accumulate(row.clean_miou.begin(), row.clean_miou.end(), 0.0) /
                     static_cast<double>(row.clean_miou.size());
    row.occluded_mean =
        std::accumulate(row.occluded_miou.begin(), row.occluded_miou.end(), 0.0) /
        static_cast<double>(row.occluded_miou.size());
    row.clean_std = population_std(row.clean_miou, row.clean_mean);
    row.occluded_std = population_std(row.occluded_miou, row.occluded_mean);
    result.rows.push_back(std::move(row));
  }
  return result;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_metrics_csv(const std::string& path, const TrainResult& result, int num_classes) {
  std::ofstream os(path);
  if (!os) throw FormatError("metrics csv: cannot open for write: " + path, 0);
  os << "epoch,split,loss";
  for (int c = 0; c < num_classes; ++c) os << ",iou_" << c;
  os << ",miou,pixel_accuracy\n";
  for (const auto& e : result.history) {
    os << e.epoch << ",train," << fmt(e.train_loss);
    for (int c = 0; c < num_classes; ++c) os << ",";
    os << ",,\n";
    os << e.epoch << ",val,";
    for (int c = 0; c < num_classes; ++c) {
      const double iou = e.val.per_class_iou[static_cast<size_t>(c)];
      os << "," << (std::isnan(iou) ? std::string("") : fmt(iou));
    }
    os << "," << fmt(e.val.mean_iou) << "," << fmt(e.val.pixel_accuracy) << "\n";
  }
}

void write_ablation_csv(const std::string& path, const AblationResult& result) {
  std::ofstream os(path);
  if (!os) throw FormatError("ablation csv: cannot open for write: " + path, 0);
  os << "mode";
  for (uint64_t s : result.seeds) os << ",clean_seed" << s;
  os << ",clean_mean,clean_std";
  for (uint64_t s : result.seeds) os << ",occluded_seed" << s;
  os << ",occluded_mean,occluded_std\n";
  for (const auto& row : result.rows) {
    os << loss_mode_name(row.mode);
    for (double v : row.clean_miou) os << "," << fmt(100.0 * v);
    os << "," << fmt(100.0 * row.clean_mean) << "," << fmt(100.0 * row.clean_std);
    for (double v : row.occluded_miou) os << "," << fmt(100.0 * v);
    os << "," << fmt(100.0 * row.occluded_mean) << "," << fmt(100.0 * row.occluded_std) << "\n";
  }
}

std::string ablation_table(const AblationResult& result) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-18s %22s %22s\n", "mode", "clean mIoU (%)",
                "occluded mIoU (%)");
  os << line;
  for (const auto& row : result.rows) {
    std::snprintf(line, sizeof(line), "%-18s %14.2f +- %5.2f %14.2f +- %5.2f\n",
                  loss_mode_name(row.mode), 100.0 * row.clean_mean, 100.0 * row.clean_std,
                  100.0 * row.occluded_mean, 100.0 * row.occluded_std);
    os << line;
  }
  return os.str();
}

}  // namespace samcl::train
