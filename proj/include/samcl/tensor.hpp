#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace samcl {

// Dense f64 tensor with reverse-mode differentiation. Ops record a DAG of
// nodes (parents + a backward rule closing over saved activations); calling
// backward() on a scalar walks that graph once in reverse topological order
// and accumulates gradients into every tensor created with requires_grad.
//
// Values are row-major. Only exact-shape and scalar broadcasting exist; the
// op set is exactly what the segmentation losses and networks need.
//
// Subgradient conventions (relevant to finite-difference checks): relu and
// max_with_zero have derivative 0 at exactly 0; clamp has derivative 0 at and
// outside its boundaries.

namespace detail {
struct TensorNode;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // value * I, as an [n, n] constant.
  static Tensor scaled_identity(int n, double value);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const;
  int64_t numel() const;
  bool requires_grad() const;
  bool is_leaf() const;

  std::span<const double> values() const;
  double value() const;  // scalar tensors only

  // Leaf-only mutable access, for initialization and optimizer updates.
  // Mutating a tensor that already participates in a recorded graph is the
  // caller's responsibility to avoid.
  std::span<double> mutable_values();

  // Gradient accumulated by backward(); empty span until first accumulation.
  std::span<const double> grad() const;
  void zero_grad();

  // Internal handle (graph plumbing and ops).
  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// ---- elementwise / reduce suite ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
inline Tensor max_with_zero(const Tensor& a) { return relu(a); }
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // requires strictly positive input
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar
// [N,C,H,W] -> [C], summing over batch and space.
Tensor sum_per_channel(const Tensor& a);
// Elementwise binary cross-entropy on logits (numerically stable fused form);
// targets are constants in [0,1].
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

// ---- convolution / spatial ----
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding);
// conv2d with the relu fused into the same node (one activation buffer, one
// backward sweep); gradient convention matches relu(conv2d(...)).
Tensor conv2d_relu(const Tensor& input, const Tensor& weight, const Tensor& bias,
                   int stride, int padding);
Tensor softmax_channels(const Tensor& x);  // per-pixel softmax over C
// log softmax over C; stable for arbitrarily large logit spreads, where
// log(softmax_channels(x)) would underflow.
Tensor log_softmax_channels(const Tensor& x);
Tensor max_pool2d(const Tensor& x, int k);
Tensor avg_pool2d(const Tensor& x, int k);
Tensor nearest_pool2d(const Tensor& x, int k);  // picks top-left of each block
Tensor upsample_nearest2x(const Tensor& x);
Tensor concat_channels(const Tensor& a, const Tensor& b);

// ---- small-matrix ops (RMI machinery) ----
Tensor slice_image(const Tensor& x, int n, int c);        // [N,C,H,W] -> [H,W]
Tensor unfold_patches(const Tensor& hw, int side);        // [H,W] -> [side^2, M]
Tensor concat_cols(const std::vector<Tensor>& parts);     // [R,Mi] -> [R, sum Mi]
Tensor sub_row_mean(const Tensor& rm);                    // center each row
Tensor matmul(const Tensor& a, const Tensor& b);          // [m,k]x[k,n]
Tensor transpose2d(const Tensor& a);
// Inverse of a symmetric positive definite matrix (input is symmetrized).
Tensor inverse_spd(const Tensor& a);
// log det of an SPD matrix via Cholesky (input is symmetrized).
Tensor cholesky_logdet(const Tensor& a);

// Reverse-mode sweep from a scalar loss. Repeated calls without zero_grad
// accumulate.
void backward(const Tensor& loss);

std::string shape_str(const std::vector<int>& shape);

}  // namespace samcl
