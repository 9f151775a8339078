#include "samcl/gradcheck.hpp"

#include <utility>

#include "samcl/loss.hpp"
#include "samcl/nn.hpp"
#include "samcl/rng.hpp"
#include "samcl/train.hpp"

namespace samcl {

namespace {

Tensor rand_tensor(std::vector<int> shape, Rng& rng, double lo, double hi,
                   bool requires_grad = true) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (auto& v : t.mutable_values()) v = rng.uniform(lo, hi);
  return t;
}

LabelMask rand_mask(int h, int w, int num_classes, Rng& rng) {
  LabelMask m(h, w);
  for (auto& c : m.classes) c = static_cast<uint8_t>(rng.uniform_int(0, num_classes - 1));
  return m;
}

}  // namespace

std::vector<GradcheckReport> gradcheck_tensor_suite(uint64_t seed) {
  std::vector<GradcheckReport> reports;
  {
    Rng rng(mix_seed(seed, {1}));
    Tensor x = rand_tensor({1, 2, 6, 6}, rng, -1.0, 1.0);
    Tensor w = rand_tensor({3, 2, 3, 3}, rng, -0.7, 0.7);
    Tensor b = rand_tensor({3}, rng, -0.4, 0.4);
    reports.push_back({"conv2d/stride1",
                       finite_diff_max_rel_err(
                           [&] { return sum(conv2d(x, w, b, 1, 1)); }, {x, w, b})});
    reports.push_back({"conv2d/stride2",
                       finite_diff_max_rel_err(
                           [&] { return sum(conv2d(x, w, b, 2, 1)); }, {x, w, b})});
  }
  {
    Rng rng(mix_seed(seed, {2}));
    Tensor x = rand_tensor({1, 4, 4, 4}, rng, -2.0, 2.0);
    Tensor probe = rand_tensor({1, 4, 4, 4}, rng, 0.1, 1.0, false);
    reports.push_back({"softmax_channels",
                       finite_diff_max_rel_err(
                           [&] { return sum(mul(softmax_channels(x), probe)); }, {x})});
  }
  {
    Rng rng(mix_seed(seed, {3}));
    Tensor a = rand_tensor({3, 4}, rng, 0.4, 1.4);
    Tensor b = rand_tensor({3, 4}, rng, 0.4, 1.4);
    Tensor c = rand_tensor({3, 4}, rng, 0.3, 0.9);
    reports.push_back({"elementwise/relu(a*b+c)",
                       finite_diff_max_rel_err(
                           [&] { return sum(relu(add(mul(a, b), c))); }, {a, b, c})});
    Tensor d = rand_tensor({3, 4}, rng, 0.3, 2.0);
    reports.push_back({"elementwise/log_exp",
                       finite_diff_max_rel_err(
                           [&] { return mean(add(log(d), exp(mul_scalar(d, 0.3)))); }, {d})});
    Tensor lg = rand_tensor({3, 4}, rng, -2.0, 2.0);
    Tensor tg = rand_tensor({3, 4}, rng, 0.05, 0.95, false);
    reports.push_back({"elementwise/bce_with_logits",
                       finite_diff_max_rel_err(
                           [&] { return mean(bce_with_logits(lg, tg)); }, {lg})});
  }
  {
    Rng rng(mix_seed(seed, {4}));
    Tensor base = rand_tensor({5, 5}, rng, -1.0, 1.0);
    reports.push_back(
        {"cholesky_logdet", finite_diff_max_rel_err(
                                [&] {
                                  Tensor spd = add(matmul(base, transpose2d(base)),
                                                   Tensor::scaled_identity(5, 1.0));
                                  return cholesky_logdet(spd);
                                },
                                {base})});
    Tensor base2 = rand_tensor({4, 4}, rng, -1.0, 1.0);
    Tensor probe = rand_tensor({4, 4}, rng, -1.0, 1.0, false);
    reports.push_back(
        {"inverse_spd", finite_diff_max_rel_err(
                            [&] {
                              Tensor spd = add(matmul(base2, transpose2d(base2)),
                                               Tensor::scaled_identity(4, 2.0));
                              return sum(mul(inverse_spd(spd), probe));
                            },
                            {base2})});
    Tensor a = rand_tensor({3, 5}, rng, -1.0, 1.0);
    Tensor b = rand_tensor({5, 2}, rng, -1.0, 1.0);
    reports.push_back(
        {"matmul", finite_diff_max_rel_err([&] { return sum(matmul(a, b)); }, {a, b})});
  }
  {
    Rng rng(mix_seed(seed, {5}));
    Tensor x = rand_tensor({1, 2, 8, 8}, rng, -1.0, 1.0);
    Tensor probe = rand_tensor({9, 9}, rng, -1.0, 1.0, false);
    reports.push_back(
        {"pool_unfold_cov", finite_diff_max_rel_err(
                                [&] {
                                  Tensor pts = sub_row_mean(
                                      unfold_patches(slice_image(avg_pool2d(x, 2), 0, 1), 3));
                                  return sum(mul(matmul(pts, transpose2d(pts)), probe));
                                },
                                {x})});
  }
  return reports;
}

std::vector<GradcheckReport> gradcheck_loss_suite(uint64_t seed) {
  std::vector<GradcheckReport> reports;
  {
    Rng rng(mix_seed(seed, {11}));
    LabelMask mask = rand_mask(8, 8, 3, rng);
    Tensor target = loss::one_hot(mask, 3);
    Tensor logits = rand_tensor({1, 3, 8, 8}, rng, -1.5, 1.5);
    const std::vector<double> weights = {1.0, 2.0, 0.5};
    reports.push_back(
        {"weighted_bce_loss",
         finite_diff_max_rel_err(
             [&] { return train::weighted_bce_loss(logits, target, weights); }, {logits})});
    reports.push_back({"dice_loss",
                       finite_diff_max_rel_err(
                           [&] { return train::dice_loss(logits, target); }, {logits})});
  }
  {
    Rng rng(mix_seed(seed, {12}));
    loss::LossConfig cfg;
    LabelMask m0 = rand_mask(8, 8, 2, rng);
    LabelMask m1 = rand_mask(8, 8, 2, rng);
    Tensor target = loss::one_hot_batch({&m0, &m1}, 2);
    Tensor logits = rand_tensor({2, 2, 8, 8}, rng, -1.5, 1.5);
    reports.push_back({"rmi_distance",
                       finite_diff_max_rel_err(
                           [&] { return loss::rmi_distance(logits, target, cfg); }, {logits})});
  }
  {
    Rng rng(mix_seed(seed, {13}));
    Tensor a = rand_tensor({1, 3, 4, 4}, rng, -1.0, 1.0);
    Tensor b = rand_tensor({1, 3, 4, 4}, rng, -1.0, 1.0);
    reports.push_back(
        {"ce_distance",
         finite_diff_max_rel_err([&] { return loss::ce_distance(a, b); }, {a, b})});
  }
  {
    Rng rng(mix_seed(seed, {14}));
    loss::LossConfig cfg;
    LabelMask mask = rand_mask(16, 16, 3, rng);
    Tensor y_pos = loss::one_hot(mask, 3);
    loss::SwappedMask y_neg = loss::class_swap(y_pos, rng);
    Tensor logits = rand_tensor({1, 3, 16, 16}, rng, -1.0, 1.0);
    loss::AuxNet net = loss::build_auxnet(3, rng);
    std::vector<Tensor> leaves{logits};
    for (auto& t : net.tensors()) leaves.push_back(t);
    reports.push_back(
        {"samcl_loss", finite_diff_max_rel_err(
                           [&] {
                             return loss::samcl_loss(logits, y_pos, y_neg.tensor, net, cfg);
                           },
                           leaves)});
  }
  return reports;
}

std::vector<GradcheckReport> gradcheck_net_suite(uint64_t seed) {
  std::vector<GradcheckReport> reports;
  Rng rng(mix_seed(seed, {21}));
  nn::UNetConfig cfg;
  cfg.base_channels = 4;
  cfg.num_classes = 4;
  nn::ModelParams params = nn::build_unet(cfg, rng);
  Tensor x = rand_tensor({1, 1, 16, 16}, rng, 0.0, 1.0, false);
  auto forward = [&] { return mean(nn::unet_forward(params, x)); };
  reports.push_back({"unet_forward/head",
                     finite_diff_max_rel_err(
                         forward, {params.at("head.weight"), params.at("head.bias")})});
  reports.push_back(
      {"unet_forward/enc1", finite_diff_max_rel_err(forward, {params.at("enc1.conv1.weight")})});
  reports.push_back({"unet_forward/dec1",
                     finite_diff_max_rel_err(forward, {params.at("dec1.conv2.bias")})});
  return reports;
}

}  // namespace samcl
