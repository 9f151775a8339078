#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "samcl/rng.hpp"
#include "samcl/tensor.hpp"
#include "samcl/thermal.hpp"

namespace samcl::loss {

struct LossConfig {
  double margin = 1.0;       // per triplet term
  int rmi_side = 3;          // neighborhood side; R = side^2 points per patch
  int rmi_downsample = 2;    // average pooling on probabilities, nearest on targets
  double rmi_epsilon = 5e-4; // covariance regularizer
  double lambda_ce = 0.5;    // pixel cross-entropy weight
  double lambda_mi = 0.5;    // region term weight; lambda_ce + lambda_mi == 1

  void validate() const;
};

// One-hot encode a label mask into [1, C, H, W].
Tensor one_hot(const LabelMask& mask, int num_classes);
// Stack several masks into [N, C, H, W].
Tensor one_hot_batch(const std::vector<const LabelMask*>& masks, int num_classes);

// Uniformly sampled derangement (no fixed point) of {0..n-1}.
std::vector<int> sample_derangement(int n, Rng& rng);

// Negative sample: channels reordered by a derangement, so every pixel's
// label is falsified while the spatial structure is preserved.
struct SwappedMask {
  Tensor tensor;                 // [N, C, H, W]
  std::vector<int> permutation;  // output channel c holds input channel permutation[c]
};
SwappedMask class_swap(const Tensor& one_hot, Rng& rng);

// Three shared-weight conv layers (3x3, stride 2, padding 1, C channels in
// and out, relu), run once per triplet sample. Train-time only.
struct AuxNet {
  int num_classes = 0;
  std::vector<std::pair<std::string, Tensor>> named;

  const Tensor& at(const std::string& name) const;
  std::vector<Tensor> tensors() const;
};
AuxNet build_auxnet(int num_classes, Rng& rng);

// Feature maps tapped after each stride-2 layer: H/2, H/4, H/8.
std::array<Tensor, 3> aux_forward(const AuxNet& net, const Tensor& x);

// Pixel cross-entropy plus a region term from conditional covariances of
// side x side neighborhood point sets:
//   lambda_ce * CE + lambda_mi * (1/(2*R*C)) * sum_c [log det(Sigma_{Y|P} + eps I) - R log eps]
// The R log eps floor makes the term nonnegative and ~0 on a saturated match;
// it is constant in the inputs so gradients are unchanged.
Tensor rmi_distance(const Tensor& logits, const Tensor& target_onehot, const LossConfig& cfg);

// -mean over pixels of sum_c softmax(ref)_c * log softmax(anchor)_c.
// Asymmetric; gradients flow into both arguments.
Tensor ce_distance(const Tensor& anchor_feat, const Tensor& ref_feat);

// max(d(a,p) - d(a,n) + margin, 0) on scalar distances.
Tensor triplet_term(const Tensor& dist_ap, const Tensor& dist_an, double margin);

// Four-term sum: a triplet on the logits with the RMI distance, plus one
// triplet per auxiliary scale with the cross-entropy distance.
Tensor samcl_loss(const Tensor& logits, const Tensor& y_pos, const Tensor& y_neg,
                  const AuxNet& net, const LossConfig& cfg);

// Same computation, also exposing the d(anchor, positive) RMI node so a
// training loop can reuse it as its base segmentation loss without a second
// evaluation (the graph sums gradients through shared nodes).
struct SamclTerms {
  Tensor total;
  Tensor rmi_positive;
};
SamclTerms samcl_loss_terms(const Tensor& logits, const Tensor& y_pos, const Tensor& y_neg,
                            const AuxNet& net, const LossConfig& cfg);

}  // namespace samcl::loss
