#pragma once

#include <string>
#include <utility>
#include <vector>

#include "samcl/rng.hpp"
#include "samcl/tensor.hpp"
#include "samcl/thermal.hpp"

namespace samcl::nn {

struct UNetConfig {
  int depth = 3;
  int base_channels = 16;
  int num_classes = 6;
  int input_channels = 1;

  void validate() const;
  // inputs must be divisible by 2^depth and by 8
  int required_divisor() const;
  bool operator==(const UNetConfig&) const = default;
};

// Named parameter collection; names are unique and registration order is the
// serialization order.
struct ModelParams {
  UNetConfig config;
  std::vector<std::pair<std::string, Tensor>> named;

  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  std::vector<Tensor> tensors() const;
  int64_t parameter_count() const;
};

// Encoder-decoder with double 3x3 conv + relu per stage, 2x max-pool
// downsampling, nearest-neighbor upsampling with skip concatenation, and a
// final 1x1 conv to class logits. Weights are Xavier-uniform, biases zero.
ModelParams build_unet(const UNetConfig& cfg, Rng& rng);

// [N, input_channels, H, W] -> [N, num_classes, H, W]
Tensor unet_forward(const ModelParams& params, const Tensor& input);

// Per-pixel argmax over channels; ties resolve to the lowest class index.
LabelMask argmax_channels(const Tensor& logits, int n);

// Normalizes the image, runs the network, returns the argmax mask.
LabelMask predict(const ModelParams& params, const ThermalImage& img);

// Stack normalized images into an [N,1,H,W] batch tensor.
Tensor image_batch(const std::vector<const ThermalImage*>& images);

// Checkpoint with the config embedded so the file is self-describing. `extra`
// entries (e.g. auxiliary-network weights) are stored after the model's.
void save_model(const std::string& path, const ModelParams& params,
                const std::vector<std::pair<std::string, Tensor>>& extra = {});
struct LoadedModel {
  ModelParams params;
  std::vector<std::pair<std::string, Tensor>> extra;
};
LoadedModel load_model(const std::string& path);

}  // namespace samcl::nn
