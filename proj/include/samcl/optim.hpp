#pragma once

#include <cstdint>
#include <vector>

#include "samcl/tensor.hpp"

namespace samcl {

// Moment-based adaptive update (decoupled weight decay) with a plain-SGD
// fallback. Deterministic: same params/grads/state always produce the same
// update.
struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-8;
  bool plain_sgd = false;
};

struct OptimizerState {
  std::vector<std::vector<double>> m;  // first moment, one slot per parameter
  std::vector<std::vector<double>> v;  // second moment
  int64_t step_count = 0;
};

// Sizes `state` to match `params` (all moments zeroed).
void init_optimizer_state(const std::vector<Tensor>& params, OptimizerState& state);

// Applies one update reading each param's accumulated gradient. Parameters
// whose grad is still unallocated are treated as zero-gradient.
void optimizer_step(std::vector<Tensor>& params, const OptimizerConfig& cfg,
                    OptimizerState& state);

}  // namespace samcl
