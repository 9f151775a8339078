#pragma once

#include <vector>

#include "samcl/metrics.hpp"
#include "samcl/nn.hpp"
#include "samcl/thermal.hpp"

namespace samcl {

// Inference entrypoint: normalize, forward in batches, aggregate dataset-level
// IoU counts. Deliberately depends only on the tensor engine, the network and
// the metrics; none of the training-time machinery is reachable from here.
metrics::EvalReport evaluate_model(const nn::ModelParams& params,
                                   const std::vector<ThermalImage>& images,
                                   const std::vector<LabelMask>& masks, int batch_size = 16);

}  // namespace samcl
