// Command-line front end: data synthesis, augmentation preview, training,
// evaluation, ablation, and gradient checking.
//
// Exit codes: 0 success, 2 config error, 3 IO/format error, 4 numeric failure,
// 5 data contract violation.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "samcl/checkpoint.hpp"
#include "samcl/config.hpp"
#include "samcl/dataset.hpp"
#include "samcl/errors.hpp"
#include "samcl/eval.hpp"
#include "samcl/gradcheck.hpp"
#include "samcl/nn.hpp"
#include "samcl/thermal.hpp"
#include "samcl/tiaug.hpp"
#include "samcl/train.hpp"

namespace fs = std::filesystem;
using namespace samcl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitContract = 5;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

config::RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return config::default_run_config();
  return config::load_run_config(path);
}

struct CommonArgs {
  std::string config_path;
  std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run-config JSON document");
  cmd->add_option("--seed", args.seed, "seed override for this command");
}

// ---- synth-data ----

int cmd_synth_data(const CommonArgs& common, const std::string& out_dir, int count) {
  config::RunConfig cfg = load_config_or_default(common.config_path);
  const uint64_t seed = common.seed.value_or(cfg.data_seed);
  const int subjects = cfg.synthetic.num_subjects;
  if (count <= 0) count = subjects * cfg.frames_per_subject;
  fs::create_directories(out_dir);

  data::DatasetIndex index;
  for (int i = 0; i < count; ++i) {
    const int subj = i % subjects;
    Rng subj_rng(mix_seed(seed, {7, static_cast<uint64_t>(subj)}));
    const data::SubjectParams sp = data::sample_subject(cfg.synthetic, subj_rng);
    Rng frame_rng(mix_seed(seed, {8, static_cast<uint64_t>(i)}));
    auto [img, mask] = data::synth_face_frame(cfg.synthetic, sp, frame_rng);

    char img_name[40], mask_name[40], subj_name[32];
    std::snprintf(img_name, sizeof(img_name), "img_%05d.thrm", i);
    std::snprintf(mask_name, sizeof(mask_name), "mask_%05d.pgm", i);
    std::snprintf(subj_name, sizeof(subj_name), "synth%03d", subj);
    save_thermal((fs::path(out_dir) / img_name).string(), img);
    save_mask_pgm((fs::path(out_dir) / mask_name).string(), mask);
    index.entries.push_back({(fs::path(out_dir) / img_name).string(),
                             (fs::path(out_dir) / mask_name).string(), subj_name});
  }
  data::save_manifest((fs::path(out_dir) / "manifest.json").string(), index);
  std::cout << "wrote " << count << " image/mask pairs and manifest.json to " << out_dir << "\n";
  return kExitOk;
}

// ---- augment ----

void write_histogram_csv(const std::string& path, const Histogram& pre, const Histogram& post) {
  std::ofstream os(path);
  if (!os) throw FormatError("histogram csv: cannot open for write: " + path, 0);
  os << "bin_lo,bin_hi,count_pre,count_post\n";
  const int bins = static_cast<int>(pre.counts.size());
  const double width = (pre.hi - pre.lo) / bins;
  for (int b = 0; b < bins; ++b) {
    os << fmt17(pre.lo + b * width) << "," << fmt17(pre.lo + (b + 1) * width) << ","
       << pre.counts[static_cast<size_t>(b)] << "," << post.counts[static_cast<size_t>(b)]
       << "\n";
  }
}

int cmd_augment(const CommonArgs& common, const std::string& in_path,
                const std::string& mask_path, const std::string& out_dir,
                const std::string& replay_path) {
  config::RunConfig cfg = load_config_or_default(common.config_path);
  const uint64_t seed = common.seed.value_or(cfg.train.seed);
  ThermalImage img = load_thermal(in_path);
  LabelMask mask = load_mask_pgm(mask_path);
  fs::create_directories(out_dir);

  tiaug::AugSample sample;
  if (!replay_path.empty()) {
    std::ifstream is(replay_path);
    if (!is) throw FormatError("replay: cannot open " + replay_path, 0);
    std::ostringstream buf;
    buf << is.rdbuf();
    sample = tiaug::replay(img, mask, tiaug::applied_params_from_json(buf.str()));
  } else {
    Rng rng(seed);
    sample = tiaug::augment(img, mask, cfg.train.aug, rng);
  }

  save_preview_pgm16((fs::path(out_dir) / "preview.pgm").string(), sample.image);
  save_mask_pgm((fs::path(out_dir) / "mask.pgm").string(), sample.mask);
  {
    std::ofstream os(fs::path(out_dir) / "params.json");
    os << tiaug::applied_params_to_json(sample.applied) << "\n";
  }
  const Histogram pre =
      compute_histogram(img, cfg.histogram_bins, cfg.histogram_lo, cfg.histogram_hi);
  const Histogram post = compute_histogram(sample.raw_image, cfg.histogram_bins,
                                           cfg.histogram_lo, cfg.histogram_hi);
  write_histogram_csv((fs::path(out_dir) / "histogram.csv").string(), pre, post);
  std::cout << "wrote preview.pgm, mask.pgm, params.json, histogram.csv to " << out_dir << "\n";
  return kExitOk;
}

// ---- train ----

int cmd_train(const CommonArgs& common, const std::string& out_dir, bool dry_run, int workers) {
  config::RunConfig cfg = load_config_or_default(common.config_path);
  if (common.seed) cfg.train.seed = *common.seed;
  if (workers > 0) cfg.train.aug_workers = workers;
  cfg.train.validate();
  if (dry_run) {
    if (cfg.data_source == "manifest") data::load_manifest(cfg.manifest_path);
    std::cout << "config ok (dry run, nothing written)\n";
    return kExitOk;
  }
  if (out_dir.empty()) throw ConfigError("/", "--out is required unless --dry-run is given");
  fs::create_directories(out_dir);

  train::TrainData dataset = config::build_dataset(cfg);
  train::TrainResult result = train::train(cfg.train, dataset);

  save_model((fs::path(out_dir) / "checkpoint.sckp").string(), result.params,
             result.aux_params);
  train::write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), result,
                           cfg.train.net.num_classes);
  std::cout << "best epoch " << result.best_epoch << " val mIoU "
            << fmt17(100.0 * result.best_val_miou) << "%\n";
  std::cout << "TRAIN best_val_miou=" << fmt17(result.best_val_miou)
            << " clean_miou=" << fmt17(result.clean_val_miou)
            << " occluded_miou=" << fmt17(result.occluded_val_miou) << "\n";
  return kExitOk;
}

// ---- eval ----

int cmd_eval(const CommonArgs& common, const std::string& checkpoint_path) {
  config::RunConfig cfg = load_config_or_default(common.config_path);
  nn::LoadedModel model = nn::load_model(checkpoint_path);
  train::TrainData dataset = config::build_dataset(cfg);
  auto clean = evaluate_model(model.params, dataset.val_images, dataset.val_masks,
                              cfg.train.batch_size);
  const auto occluded_images = train::occluded_validation(
      dataset.val_images, dataset.val_masks, cfg.train.eval_aug, cfg.train.eval_aug_seed);
  auto occluded = evaluate_model(model.params, occluded_images, dataset.val_masks,
                                 cfg.train.batch_size);
  std::printf("clean    mIoU %6.2f%%  pixel acc %6.2f%%\n", 100.0 * clean.mean_iou,
              100.0 * clean.pixel_accuracy);
  std::printf("occluded mIoU %6.2f%%  pixel acc %6.2f%%\n", 100.0 * occluded.mean_iou,
              100.0 * occluded.pixel_accuracy);
  std::cout << "EVAL clean_miou=" << fmt17(clean.mean_iou)
            << " occluded_miou=" << fmt17(occluded.mean_iou) << "\n";
  return kExitOk;
}

// ---- ablate ----

int cmd_ablate(const CommonArgs& common, const std::string& out_dir) {
  config::RunConfig cfg = load_config_or_default(common.config_path);
  if (common.seed) cfg.train.seed = *common.seed;
  cfg.train.validate();
  fs::create_directories(out_dir);
  train::TrainData dataset = config::build_dataset(cfg);
  train::AblationResult result =
      train::ablation(cfg.train, cfg.ablate_modes, cfg.ablate_seeds, dataset);
  train::write_ablation_csv((fs::path(out_dir) / "ablation.csv").string(), result);
  std::cout << train::ablation_table(result);
  return kExitOk;
}

// ---- gradcheck ----

int cmd_gradcheck(const CommonArgs& common, const std::string& module) {
  // --config is accepted for interface uniformity; the suites are self-contained
  if (!common.config_path.empty()) (void)load_config_or_default(common.config_path);
  const uint64_t seed = common.seed.value_or(0);
  std::vector<GradcheckReport> reports;
  if (module == "tensor" || module == "all") {
    auto r = gradcheck_tensor_suite(seed);
    reports.insert(reports.end(), r.begin(), r.end());
  }
  if (module == "loss" || module == "all") {
    auto r = gradcheck_loss_suite(seed);
    reports.insert(reports.end(), r.begin(), r.end());
  }
  if (module == "net" || module == "all") {
    auto r = gradcheck_net_suite(seed);
    reports.insert(reports.end(), r.begin(), r.end());
  }
  if (reports.empty())
    throw ConfigError("/module", "must be one of tensor, loss, net, all");

  constexpr double kThreshold = 1e-4;
  bool all_ok = true;
  std::printf("%-28s %14s  %s\n", "op", "max rel err", "status");
  std::vector<std::string> failing;
  for (const auto& r : reports) {
    const bool ok = r.max_rel_err < kThreshold;
    all_ok = all_ok && ok;
    if (!ok) failing.push_back(r.op);
    std::printf("%-28s %14.3e  %s\n", r.op.c_str(), r.max_rel_err, ok ? "ok" : "FAIL");
  }
  if (!all_ok) {
    std::ostringstream os;
    os << "gradient check failed for:";
    for (const auto& f : failing) os << " " << f;
    throw NumericError(os.str());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thermal face segmentation training framework"};
  app.require_subcommand(1);

  CommonArgs synth_args, aug_args, train_args, eval_args, ablate_args, grad_args;

  auto* synth = app.add_subcommand("synth-data", "generate a synthetic thermal face dataset");
  add_common(synth, synth_args);
  std::string synth_out;
  int synth_count = 0;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--count", synth_count, "number of image/mask pairs");

  auto* aug = app.add_subcommand("augment", "augment one image and write previews");
  add_common(aug, aug_args);
  std::string aug_in, aug_mask, aug_out, aug_replay;
  aug->add_option("--in", aug_in, "input THRM image")->required();
  aug->add_option("--mask", aug_mask, "input PGM mask")->required();
  aug->add_option("--out", aug_out, "output directory")->required();
  aug->add_option("--replay", aug_replay, "params JSON to replay instead of sampling");

  auto* trn = app.add_subcommand("train", "train a segmentation network");
  add_common(trn, train_args);
  std::string train_out;
  bool dry_run = false;
  int train_workers = 0;
  trn->add_option("--out", train_out, "output directory");
  trn->add_flag("--dry-run", dry_run, "validate the config and exit");
  trn->add_option("--workers", train_workers, "augmentation worker threads");

  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint on the validation split");
  add_common(evl, eval_args);
  std::string eval_checkpoint;
  evl->add_option("--checkpoint", eval_checkpoint, "model checkpoint")->required();

  auto* abl = app.add_subcommand("ablate", "run the loss-mode ablation grid");
  add_common(abl, ablate_args);
  std::string ablate_out;
  abl->add_option("--out", ablate_out, "output directory")->required();

  auto* grd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common(grd, grad_args);
  std::string grad_module = "all";
  grd->add_option("--module", grad_module, "tensor, loss, net, or all");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth_data(synth_args, synth_out, synth_count);
    if (aug->parsed()) return cmd_augment(aug_args, aug_in, aug_mask, aug_out, aug_replay);
    if (trn->parsed()) return cmd_train(train_args, train_out, dry_run, train_workers);
    if (evl->parsed()) return cmd_eval(eval_args, eval_checkpoint);
    if (abl->parsed()) return cmd_ablate(ablate_args, ablate_out);
    if (grd->parsed()) return cmd_gradcheck(grad_args, grad_module);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const StatsError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitContract;
  } catch (const ContractError& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return kExitContract;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}
