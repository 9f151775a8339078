#include "samcl/optim.hpp"

#include <cmath>
#include <string>

#include "samcl/errors.hpp"

namespace samcl {

void init_optimizer_state(const std::vector<Tensor>& params, OptimizerState& state) {
  state.m.clear();
  state.v.clear();
  state.step_count = 0;
  for (const auto& p : params) {
    state.m.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    state.v.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }
}

void optimizer_step(std::vector<Tensor>& params, const OptimizerConfig& cfg,
                    OptimizerState& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ContractError("optimizer_step: state has " + std::to_string(state.m.size()) +
                        " slots for " + std::to_string(params.size()) + " params");
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto vals = params[pi].mutable_values();
    auto grads = params[pi].grad();
    if (!grads.empty() && grads.size() != vals.size())
      throw ContractError("optimizer_step: param/grad shape mismatch on slot " +
                          std::to_string(pi));
    if (state.m[pi].size() != vals.size())
      throw ContractError("optimizer_step: state slot " + std::to_string(pi) +
                          " sized for a different parameter");
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (size_t i = 0; i < vals.size(); ++i) {
      const double g = grads.empty() ? 0.0 : grads[i];
      if (cfg.plain_sgd) {
        vals[i] -= cfg.learning_rate * (g + cfg.weight_decay * vals[i]);
        continue;
      }
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      vals[i] -= cfg.learning_rate * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                      cfg.weight_decay * vals[i]);
    }
  }
}

}  // namespace samcl
