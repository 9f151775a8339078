#include "samcl/loss.hpp"

#include <algorithm>
#include <cmath>

#include "samcl/errors.hpp"

namespace samcl::loss {

void LossConfig::validate() const {
  if (margin < 0.0) throw ContractError("LossConfig: margin must be >= 0");
  if (rmi_side < 1) throw ContractError("LossConfig: rmi_side must be >= 1");
  if (rmi_downsample < 1) throw ContractError("LossConfig: rmi_downsample must be >= 1");
  if (!(rmi_epsilon > 0.0)) throw ContractError("LossConfig: rmi_epsilon must be > 0");
  if (std::abs(lambda_ce + lambda_mi - 1.0) > 1e-12)
    throw ContractError("LossConfig: lambda_ce + lambda_mi must equal 1");
}

Tensor one_hot(const LabelMask& mask, int num_classes) {
  return one_hot_batch({&mask}, num_classes);
}

Tensor one_hot_batch(const std::vector<const LabelMask*>& masks, int num_classes) {
  if (masks.empty()) throw ContractError("one_hot: empty batch");
  if (num_classes < 1) throw ContractError("one_hot: num_classes must be >= 1");
  const int H = masks[0]->height, W = masks[0]->width;
  const int64_t plane = static_cast<int64_t>(H) * W;
  Tensor out = Tensor::zeros({static_cast<int>(masks.size()), num_classes, H, W});
  auto v = out.mutable_values();
  for (size_t n = 0; n < masks.size(); ++n) {
    const auto& m = *masks[n];
    if (m.height != H || m.width != W) throw ContractError("one_hot: mixed mask sizes");
    for (int64_t p = 0; p < plane; ++p) {
      const int c = m.classes[static_cast<size_t>(p)];
      if (c >= num_classes)
        throw ContractError("one_hot: label " + std::to_string(c) + " out of range [0," +
                            std::to_string(num_classes) + ") at pixel (" +
                            std::to_string(p / W) + "," + std::to_string(p % W) + ")");
      v[(static_cast<int64_t>(n) * num_classes + c) * plane + p] = 1.0;
    }
  }
  return out;
}

std::vector<int> sample_derangement(int n, Rng& rng) {
  if (n < 2) throw ContractError("sample_derangement: need n >= 2, got " + std::to_string(n));
  std::vector<int> perm(static_cast<size_t>(n));
  // rejection from uniform permutations keeps the derangement distribution
  // uniform; acceptance rate approaches 1/e
  while (true) {
    for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    rng.shuffle(perm);
    bool fixed = false;
    for (int i = 0; i < n; ++i)
      if (perm[static_cast<size_t>(i)] == i) {
        fixed = true;
        break;
      }
    if (!fixed) return perm;
  }
}

SwappedMask class_swap(const Tensor& one_hot, Rng& rng) {
  const auto& s = one_hot.shape();
  if (s.size() != 4) throw ContractError("class_swap: expected [N,C,H,W]");
  const int N = s[0], C = s[1];
  const int64_t plane = static_cast<int64_t>(s[2]) * s[3];
  if (C < 2) throw ContractError("class_swap: need at least 2 channels, got " +
                                 std::to_string(C));
  SwappedMask result;
  result.permutation = sample_derangement(C, rng);
  result.tensor = Tensor::zeros(s);
  auto dst = result.tensor.mutable_values();
  const auto src = one_hot.values();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const int from = result.permutation[static_cast<size_t>(c)];
      std::copy(src.begin() + (static_cast<int64_t>(n) * C + from) * plane,
                src.begin() + (static_cast<int64_t>(n) * C + from + 1) * plane,
                dst.begin() + (static_cast<int64_t>(n) * C + c) * plane);
    }
  return result;
}

const Tensor& AuxNet::at(const std::string& name) const {
  for (const auto& [n, t] : named)
    if (n == name) return t;
  throw ContractError("AuxNet: no parameter named '" + name + "'");
}

std::vector<Tensor> AuxNet::tensors() const {
  std::vector<Tensor> out;
  for (const auto& [n, t] : named) out.push_back(t);
  return out;
}

AuxNet build_auxnet(int num_classes, Rng& rng) {
  if (num_classes < 2) throw ContractError("build_auxnet: num_classes must be >= 2");
  AuxNet net;
  net.num_classes = num_classes;
  const double fan = static_cast<double>(num_classes) * 9;
  const double a = std::sqrt(6.0 / (fan + fan));
  for (int layer = 1; layer <= 3; ++layer) {
    Tensor w = Tensor::zeros({num_classes, num_classes, 3, 3}, true);
    for (auto& v : w.mutable_values()) v = rng.uniform(-a, a);
    net.named.emplace_back("aux" + std::to_string(layer) + ".weight", w);
    net.named.emplace_back("aux" + std::to_string(layer) + ".bias",
                           Tensor::zeros({num_classes}, true));
  }
  return net;
}

std::array<Tensor, 3> aux_forward(const AuxNet& net, const Tensor& x) {
  const auto& s = x.shape();
  if (s.size() != 4 || s[1] != net.num_classes)
    throw ContractError("aux_forward: expected [N," + std::to_string(net.num_classes) +
                        ",H,W], got " + shape_str(s));
  if (s[2] % 8 != 0 || s[3] % 8 != 0)
    throw ContractError("aux_forward: H,W must be divisible by 8, got " + shape_str(s));
  std::array<Tensor, 3> taps;
  Tensor h = x;
  for (int layer = 1; layer <= 3; ++layer) {
    const std::string p = "aux" + std::to_string(layer);
    h = conv2d_relu(h, net.at(p + ".weight"), net.at(p + ".bias"), 2, 1);
    taps[static_cast<size_t>(layer - 1)] = h;
  }
  return taps;
}

namespace {

// CE = -mean over pixels of sum_c target_c * logp_c, with logp the stable
// per-pixel log softmax.
Tensor pixel_cross_entropy(const Tensor& log_probs, const Tensor& target) {
  const auto& s = log_probs.shape();
  const double pixels = static_cast<double>(s[0]) * s[2] * s[3];
  return mul_scalar(sum(mul(target, log_probs)), -1.0 / pixels);
}

}  // namespace

// Core of the distance, working from precomputed softmax/log-softmax of the
// logits so callers evaluating several distances against one anchor share
// those nodes.
static Tensor rmi_distance_from_parts(const Tensor& probs, const Tensor& log_probs,
                                      const Tensor& target_onehot, const LossConfig& cfg) {
  cfg.validate();
  const auto& s = probs.shape();
  if (s.size() != 4 || target_onehot.shape() != s)
    throw ContractError("rmi_distance: probabilities " + shape_str(probs.shape()) +
                        " and target " + shape_str(target_onehot.shape()) + " must match");
  const int N = s[0], C = s[1];
  const int side = cfg.rmi_side;
  const int R = side * side;

  Tensor ce = pixel_cross_entropy(log_probs, target_onehot);

  Tensor pd = probs, yd = target_onehot;
  if (cfg.rmi_downsample > 1) {
    pd = avg_pool2d(probs, cfg.rmi_downsample);
    yd = nearest_pool2d(target_onehot, cfg.rmi_downsample);
  }
  if (pd.shape()[2] < side || pd.shape()[3] < side)
    throw ContractError("rmi_distance: downsampled map " + shape_str(pd.shape()) +
                        " smaller than neighborhood side " + std::to_string(side));

  const Tensor eps_eye = Tensor::scaled_identity(R, cfg.rmi_epsilon);
  const double floor_logdet = R * std::log(cfg.rmi_epsilon);
  Tensor mi_sum;
  for (int c = 0; c < C; ++c) {
    std::vector<Tensor> y_parts, p_parts;
    for (int n = 0; n < N; ++n) {
      y_parts.push_back(unfold_patches(slice_image(yd, n, c), side));
      p_parts.push_back(unfold_patches(slice_image(pd, n, c), side));
    }
    Tensor y_pts = sub_row_mean(concat_cols(y_parts));
    Tensor p_pts = sub_row_mean(concat_cols(p_parts));
    const double inv_m = 1.0 / static_cast<double>(y_pts.shape()[1]);
    Tensor cov_yy = mul_scalar(matmul(y_pts, transpose2d(y_pts)), inv_m);
    Tensor cov_yp = mul_scalar(matmul(y_pts, transpose2d(p_pts)), inv_m);
    Tensor cov_pp = mul_scalar(matmul(p_pts, transpose2d(p_pts)), inv_m);
    try {
      Tensor cond = sub(cov_yy, matmul(matmul(cov_yp, inverse_spd(add(cov_pp, eps_eye))),
                                       transpose2d(cov_yp)));
      Tensor term = add_scalar(cholesky_logdet(add(cond, eps_eye)), -floor_logdet);
      mi_sum = mi_sum.defined() ? add(mi_sum, term) : term;
    } catch (const SingularMatrixError& e) {
      throw SingularMatrixError(
          std::string(e.what()) + "; increase rmi_epsilon (currently " +
              std::to_string(cfg.rmi_epsilon) + ")",
          e.pivot);
    }
  }
  Tensor mi = mul_scalar(mi_sum, 1.0 / (2.0 * R * C));
  return add(mul_scalar(ce, cfg.lambda_ce), mul_scalar(mi, cfg.lambda_mi));
}

Tensor rmi_distance(const Tensor& logits, const Tensor& target_onehot, const LossConfig& cfg) {
  if (!logits.defined() || logits.shape().size() != 4)
    throw ContractError("rmi_distance: logits must be [N,C,H,W]");
  return rmi_distance_from_parts(softmax_channels(logits), log_softmax_channels(logits),
                                 target_onehot, cfg);
}

Tensor ce_distance(const Tensor& anchor_feat, const Tensor& ref_feat) {
  const auto& s = anchor_feat.shape();
  if (s.size() != 4 || ref_feat.shape() != s)
    throw ContractError("ce_distance: feature shapes must match, got " +
                        shape_str(anchor_feat.shape()) + " vs " + shape_str(ref_feat.shape()));
  return pixel_cross_entropy(log_softmax_channels(anchor_feat), softmax_channels(ref_feat));
}

Tensor triplet_term(const Tensor& dist_ap, const Tensor& dist_an, double margin) {
  if (margin < 0.0) throw ContractError("triplet_term: margin must be >= 0");
  if (dist_ap.numel() != 1 || dist_an.numel() != 1)
    throw ContractError("triplet_term: distances must be scalars");
  return max_with_zero(add_scalar(sub(dist_ap, dist_an), margin));
}

SamclTerms samcl_loss_terms(const Tensor& logits, const Tensor& y_pos, const Tensor& y_neg,
                            const AuxNet& net, const LossConfig& cfg) {
  cfg.validate();
  if (logits.shape() != y_pos.shape() || logits.shape() != y_neg.shape())
    throw ContractError("samcl_loss: logits/positive/negative shapes must match");

  const Tensor anchor = softmax_channels(logits);
  const Tensor anchor_logp = log_softmax_channels(logits);
  SamclTerms terms;
  terms.rmi_positive = rmi_distance_from_parts(anchor, anchor_logp, y_pos, cfg);
  Tensor total = triplet_term(terms.rmi_positive,
                              rmi_distance_from_parts(anchor, anchor_logp, y_neg, cfg),
                              cfg.margin);

  const auto a_taps = aux_forward(net, anchor);
  const auto p_taps = aux_forward(net, y_pos);
  const auto n_taps = aux_forward(net, y_neg);
  for (size_t scale = 0; scale < 3; ++scale) {
    total = add(total, triplet_term(ce_distance(a_taps[scale], p_taps[scale]),
                                    ce_distance(a_taps[scale], n_taps[scale]), cfg.margin));
  }
  terms.total = total;
  return terms;
}

Tensor samcl_loss(const Tensor& logits, const Tensor& y_pos, const Tensor& y_neg,
                  const AuxNet& net, const LossConfig& cfg) {
  return samcl_loss_terms(logits, y_pos, y_neg, net, cfg).total;
}

}  // namespace samcl::loss
