#include "samcl/nn.hpp"

#include <algorithm>
#include <cmath>

#include "samcl/checkpoint.hpp"
#include "samcl/errors.hpp"

namespace samcl::nn {

void UNetConfig::validate() const {
  if (depth < 1 || depth > 6) throw ContractError("UNetConfig: depth must be in [1,6]");
  if (base_channels < 1) throw ContractError("UNetConfig: base_channels must be >= 1");
  if (num_classes < 2) throw ContractError("UNetConfig: num_classes must be >= 2");
  if (input_channels < 1) throw ContractError("UNetConfig: input_channels must be >= 1");
}

int UNetConfig::required_divisor() const { return std::max(1 << depth, 8); }

const Tensor& ModelParams::at(const std::string& name) const {
  for (const auto& [n, t] : named)
    if (n == name) return t;
  throw ContractError("ModelParams: no parameter named '" + name + "'");
}

Tensor& ModelParams::at(const std::string& name) {
  for (auto& [n, t] : named)
    if (n == name) return t;
  throw ContractError("ModelParams: no parameter named '" + name + "'");
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& [n, t] : named) out.push_back(t);
  return out;
}

int64_t ModelParams::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : named) n += t.numel();
  return n;
}

namespace {

Tensor xavier_conv(int c_out, int c_in, int k, Rng& rng) {
  const double fan_in = static_cast<double>(c_in) * k * k;
  const double fan_out = static_cast<double>(c_out) * k * k;
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor w = Tensor::zeros({c_out, c_in, k, k}, true);
  for (auto& v : w.mutable_values()) v = rng.uniform(-a, a);
  return w;
}

void add_double_conv(ModelParams& p, const std::string& prefix, int c_in, int c_out, Rng& rng) {
  p.named.emplace_back(prefix + ".conv1.weight", xavier_conv(c_out, c_in, 3, rng));
  p.named.emplace_back(prefix + ".conv1.bias", Tensor::zeros({c_out}, true));
  p.named.emplace_back(prefix + ".conv2.weight", xavier_conv(c_out, c_out, 3, rng));
  p.named.emplace_back(prefix + ".conv2.bias", Tensor::zeros({c_out}, true));
}

Tensor double_conv(const ModelParams& p, const std::string& prefix, const Tensor& x) {
  Tensor h = conv2d_relu(x, p.at(prefix + ".conv1.weight"), p.at(prefix + ".conv1.bias"), 1, 1);
  return conv2d_relu(h, p.at(prefix + ".conv2.weight"), p.at(prefix + ".conv2.bias"), 1, 1);
}

}  // namespace

ModelParams build_unet(const UNetConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  int c_in = cfg.input_channels;
  for (int i = 0; i < cfg.depth; ++i) {
    const int c_out = cfg.base_channels << i;
    add_double_conv(p, "enc" + std::to_string(i + 1), c_in, c_out, rng);
    c_in = c_out;
  }
  add_double_conv(p, "bottleneck", c_in, cfg.base_channels << cfg.depth, rng);
  for (int i = cfg.depth - 1; i >= 0; --i) {
    const int skip = cfg.base_channels << i;
    const int up = cfg.base_channels << (i + 1);
    add_double_conv(p, "dec" + std::to_string(i + 1), up + skip, skip, rng);
  }
  p.named.emplace_back("head.weight", xavier_conv(cfg.num_classes, cfg.base_channels, 1, rng));
  p.named.emplace_back("head.bias", Tensor::zeros({cfg.num_classes}, true));
  return p;
}

Tensor unet_forward(const ModelParams& params, const Tensor& input) {
  const auto& cfg = params.config;
  const auto& shape = input.shape();
  if (shape.size() != 4 || shape[1] != cfg.input_channels)
    throw ContractError("unet_forward: expected [N," + std::to_string(cfg.input_channels) +
                        ",H,W], got " + shape_str(shape));
  const int div = cfg.required_divisor();
  if (shape[2] % div != 0 || shape[3] % div != 0)
    throw ContractError("unet_forward: H,W must be divisible by " + std::to_string(div) +
                        ", got " + shape_str(shape));

  std::vector<Tensor> skips;
  Tensor x = input;
  for (int i = 0; i < cfg.depth; ++i) {
    x = double_conv(params, "enc" + std::to_string(i + 1), x);
    skips.push_back(x);
    x = max_pool2d(x, 2);
  }
  x = double_conv(params, "bottleneck", x);
  for (int i = cfg.depth - 1; i >= 0; --i) {
    x = concat_channels(upsample_nearest2x(x), skips[static_cast<size_t>(i)]);
    x = double_conv(params, "dec" + std::to_string(i + 1), x);
  }
  return conv2d(x, params.at("head.weight"), params.at("head.bias"), 1, 0);
}

LabelMask argmax_channels(const Tensor& logits, int n) {
  const auto& s = logits.shape();
  if (s.size() != 4) throw ContractError("argmax_channels: expected [N,C,H,W]");
  const int C = s[1], H = s[2], W = s[3];
  if (n < 0 || n >= s[0]) throw ContractError("argmax_channels: batch index out of range");
  const int64_t plane = static_cast<int64_t>(H) * W;
  const double* base = logits.values().data() + static_cast<int64_t>(n) * C * plane;
  LabelMask mask(H, W);
  for (int64_t p = 0; p < plane; ++p) {
    int best = 0;
    double best_v = base[p];
    for (int c = 1; c < C; ++c) {
      const double v = base[c * plane + p];
      if (v > best_v) {  // strict: exact ties keep the lowest class index
        best_v = v;
        best = c;
      }
    }
    mask.classes[static_cast<size_t>(p)] = static_cast<uint8_t>(best);
  }
  return mask;
}

Tensor image_batch(const std::vector<const ThermalImage*>& images) {
  if (images.empty()) throw ContractError("image_batch: empty batch");
  const int H = images[0]->height, W = images[0]->width;
  Tensor batch = Tensor::zeros({static_cast<int>(images.size()), 1, H, W});
  auto out = batch.mutable_values();
  for (size_t i = 0; i < images.size(); ++i) {
    const auto& img = *images[i];
    if (img.height != H || img.width != W)
      throw ContractError("image_batch: mixed image sizes in one batch");
    std::copy(img.values.begin(), img.values.end(),
              out.begin() + static_cast<int64_t>(i) * H * W);
  }
  return batch;
}

LabelMask predict(const ModelParams& params, const ThermalImage& img) {
  const ThermalImage norm = normalize_min_max(img);
  Tensor logits = unet_forward(params, image_batch({&norm}));
  return argmax_channels(logits, 0);
}

void save_model(const std::string& path, const ModelParams& params,
                const std::vector<std::pair<std::string, Tensor>>& extra) {
  std::vector<std::pair<std::string, Tensor>> named;
  named.emplace_back("config.depth", Tensor::scalar(params.config.depth));
  named.emplace_back("config.base_channels", Tensor::scalar(params.config.base_channels));
  named.emplace_back("config.num_classes", Tensor::scalar(params.config.num_classes));
  named.emplace_back("config.input_channels", Tensor::scalar(params.config.input_channels));
  for (const auto& [name, t] : params.named) named.emplace_back(name, t);
  for (const auto& [name, t] : extra) named.emplace_back("extra." + name, t);
  save_checkpoint(path, named);
}

LoadedModel load_model(const std::string& path) {
  auto entries = load_checkpoint(path);
  LoadedModel model;
  UNetConfig cfg;
  bool have_depth = false;
  for (const auto& e : entries) {
    if (e.name == "config.depth") {
      cfg.depth = static_cast<int>(e.data.at(0));
      have_depth = true;
    } else if (e.name == "config.base_channels") {
      cfg.base_channels = static_cast<int>(e.data.at(0));
    } else if (e.name == "config.num_classes") {
      cfg.num_classes = static_cast<int>(e.data.at(0));
    } else if (e.name == "config.input_channels") {
      cfg.input_channels = static_cast<int>(e.data.at(0));
    } else if (e.name.rfind("extra.", 0) == 0) {
      model.extra.emplace_back(e.name.substr(6),
                               Tensor::from_data(e.shape, e.data, true));
    } else {
      model.params.named.emplace_back(e.name, Tensor::from_data(e.shape, e.data, true));
    }
  }
  if (!have_depth) throw FormatError("model checkpoint: missing embedded config", 0);
  cfg.validate();
  model.params.config = cfg;
  return model;
}

}  // namespace samcl::nn
