#pragma once

#include <string>
#include <vector>

#include "samcl/dataset.hpp"
#include "samcl/train.hpp"

namespace samcl::config {

// One JSON document drives every command. Unknown keys and type mismatches
// are rejected up front with JSON-pointer paths.
struct RunConfig {
  data::SyntheticFaceConfig synthetic;
  int frames_per_subject = 10;

  std::string data_source = "synthetic";  // "synthetic" or "manifest"
  std::string manifest_path;
  int train_subjects = 20;  // synthetic source: subject-disjoint split sizes
  int val_subjects = 5;
  double train_fraction = 0.85;  // manifest source: subject split fraction
  uint64_t data_seed = 97;       // dataset generation/split seed, separate from
                                 // the training seed so ablations share data

  train::TrainConfig train;

  int histogram_bins = 44;
  double histogram_lo = 18.0;
  double histogram_hi = 40.0;

  std::vector<train::LossMode> ablate_modes;
  std::vector<uint64_t> ablate_seeds;
};

RunConfig default_run_config();
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// The effective default document (useful as a starting point for edits).
std::string dump_run_config(const RunConfig& cfg);

// Materializes the dataset the config describes: procedurally generated
// subject-disjoint splits for the synthetic source, or manifest entries split
// by subject. Driven by data_seed only, so every training run over this
// config sees identical data.
train::TrainData build_dataset(const RunConfig& cfg);

}  // namespace samcl::config
