#include "samcl/eval.hpp"

#include <algorithm>

#include "samcl/errors.hpp"

namespace samcl {

metrics::EvalReport evaluate_model(const nn::ModelParams& params,
                                   const std::vector<ThermalImage>& images,
                                   const std::vector<LabelMask>& masks, int batch_size) {
  if (images.size() != masks.size() || images.empty())
    throw ContractError("evaluate_model: need equally many images and masks, non-empty");
  if (batch_size < 1) throw ContractError("evaluate_model: batch_size must be >= 1");

  metrics::MiouAccumulator acc(params.config.num_classes);
  std::vector<ThermalImage> normalized;
  normalized.reserve(images.size());
  for (const auto& img : images) normalized.push_back(normalize_min_max(img));

  // inference-only copy: with no gradient tracking the forward graph records
  // nothing
  nn::ModelParams frozen;
  frozen.config = params.config;
  for (const auto& [name, t] : params.named)
    frozen.named.emplace_back(
        name, Tensor::from_data(t.shape(), {t.values().begin(), t.values().end()}, false));

  for (size_t start = 0; start < normalized.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(normalized.size(), start + static_cast<size_t>(batch_size));
    std::vector<const ThermalImage*> batch;
    for (size_t i = start; i < end; ++i) batch.push_back(&normalized[i]);
    Tensor logits = unet_forward(frozen, nn::image_batch(batch));
    for (size_t i = start; i < end; ++i)
      acc.add(nn::argmax_channels(logits, static_cast<int>(i - start)), masks[i]);
  }
  return acc.report();
}

}  // namespace samcl
