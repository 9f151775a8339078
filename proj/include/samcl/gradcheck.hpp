#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "samcl/tensor.hpp"

namespace samcl {

// Central finite-difference gradient oracle. `forward` must rebuild the graph
// from the current leaf values on every call, so the check stays independent
// of the reverse-mode path it validates.
//
// Error metric: max_i |analytic_i - fd_i| / max(max|analytic|, max|fd|, floor),
// taken over all elements of all leaves.
inline double finite_diff_max_rel_err(const std::function<Tensor()>& forward,
                                      std::vector<Tensor> leaves, double h = 1e-5,
                                      double floor = 1e-12) {
  for (auto& leaf : leaves) leaf.zero_grad();
  Tensor loss = forward();
  backward(loss);

  std::vector<double> analytic;
  for (auto& leaf : leaves) {
    auto g = leaf.grad();
    if (g.empty())
      analytic.insert(analytic.end(), static_cast<size_t>(leaf.numel()), 0.0);
    else
      analytic.insert(analytic.end(), g.begin(), g.end());
  }

  std::vector<double> fd;
  fd.reserve(analytic.size());
  for (auto& leaf : leaves) {
    auto vals = leaf.mutable_values();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + h;
      const double fp = forward().value();
      vals[i] = keep - h;
      const double fm = forward().value();
      vals[i] = keep;
      fd.push_back((fp - fm) / (2.0 * h));
    }
  }

  double scale = floor;
  for (double a : analytic) scale = std::max(scale, std::abs(a));
  for (double f : fd) scale = std::max(scale, std::abs(f));
  double worst = 0.0;
  for (size_t i = 0; i < fd.size(); ++i)
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / scale);
  return worst;
}

struct GradcheckReport {
  std::string op;
  double max_rel_err;
};

// Finite-difference suites over randomized small shapes; used by the
// gradcheck CLI command and the verification harness.
std::vector<GradcheckReport> gradcheck_tensor_suite(uint64_t seed);
std::vector<GradcheckReport> gradcheck_loss_suite(uint64_t seed);
std::vector<GradcheckReport> gradcheck_net_suite(uint64_t seed);

}  // namespace samcl
