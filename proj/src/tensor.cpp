#include "samcl/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "samcl/errors.hpp"

namespace samcl {

namespace {

// Training graphs allocate and free multi-megabyte activation buffers every
// step; with glibc defaults those round-trip through mmap and the kernel
// re-zeroes the pages each time. Keep them on the free lists instead.
struct MallocTuning {
  MallocTuning() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 512 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  }
};
const MallocTuning malloc_tuning;

}  // namespace

namespace detail {

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> val;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(val.size(), 0.0);
  }
};

}  // namespace detail

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

static void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

static int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    require(d >= 0, "negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

// ---- Tensor surface ----

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->val.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.node()->val.begin(), t.node()->val.end(), value);
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  require(shape_numel(shape) == static_cast<int64_t>(data.size()),
          "from_data: shape " + shape_str(shape) + " does not match data length " +
              std::to_string(data.size()));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->val = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::scaled_identity(int n, double value) {
  Tensor t = zeros({n, n});
  auto v = t.mutable_values();
  for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = value;
  return t;
}

const std::vector<int>& Tensor::shape() const {
  require(defined(), "shape() on undefined tensor");
  return node_->shape;
}

int64_t Tensor::numel() const {
  require(defined(), "numel() on undefined tensor");
  return node_->numel();
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }
bool Tensor::is_leaf() const { return defined() && node_->is_leaf; }

std::span<const double> Tensor::values() const {
  require(defined(), "values() on undefined tensor");
  return {node_->val.data(), node_->val.size()};
}

double Tensor::value() const {
  require(defined() && numel() == 1, "value() requires a scalar tensor");
  return node_->val[0];
}

std::span<double> Tensor::mutable_values() {
  require(defined(), "mutable_values() on undefined tensor");
  require(node_->is_leaf, "mutable_values() is leaf-only");
  return {node_->val.data(), node_->val.size()};
}

std::span<const double> Tensor::grad() const {
  require(defined(), "grad() on undefined tensor");
  return {node_->grad.data(), node_->grad.size()};
}

void Tensor::zero_grad() {
  require(defined(), "zero_grad() on undefined tensor");
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

// ---- graph plumbing ----

static Tensor make_op(std::vector<int> shape, std::vector<double> val,
                      std::vector<NodePtr> parents, std::function<void(TensorNode&)> bw) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->val = std::move(val);
  n->is_leaf = false;
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  n->requires_grad = needs;
  if (needs) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(bw);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  require(loss.defined(), "backward: undefined loss tensor");
  require(loss.numel() == 1, "backward: loss must be scalar, got " + shape_str(loss.shape()));
  NodePtr root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS over the grad-requiring subgraph; every node is
  // visited exactly once and processed in reverse topological order.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* node;
    size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    bool descended = false;
    while (f.next < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});  // invalidates f; loop re-enters via stack.back()
        descended = true;
        break;
      }
    }
    if (!descended) {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Leaf gradients accumulate across calls; interior nodes are conduits and
  // start each sweep clean.
  for (TensorNode* n : order)
    if (!n->is_leaf) n->grad.clear();

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// ---- elementwise ----

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.defined() && b.defined(), std::string(op) + ": undefined operand");
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const auto& av = a.node()->val;
  const auto& bv = b.node()->val;
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode& self) {
    for (int k = 0; k < 2; ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  const auto& av = a.node()->val;
  const auto& bv = b.node()->val;
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  return make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const auto& av = a.node()->val;
  const auto& bv = b.node()->val;
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.val[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.val[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  const auto& av = a.node()->val;
  const auto& bv = b.node()->val;
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) {
    require(bv[i] != 0.0, "div: zero divisor at element " + std::to_string(i));
    out[i] = av[i] / bv[i];
  }
  return make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] / pb.val[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        pb.grad[i] -= self.grad[i] * pa.val[i] / (pb.val[i] * pb.val[i]);
    }
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  require(a.defined(), "add_scalar: undefined operand");
  const auto& av = a.node()->val;
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + s;
  return make_op(a.shape(), std::move(out), {a.node()}, [](TensorNode& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor mul_scalar(const Tensor& a, double s) {
  require(a.defined(), "mul_scalar: undefined operand");
  const auto& av = a.node()->val;
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * s;
  return make_op(a.shape(), std::move(out), {a.node()}, [s](TensorNode& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * s;
  });
}

Tensor relu(const Tensor& a) {
  require(a.defined(), "relu: undefined operand");
  const auto& av = a.node()->val;
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  return make_op(a.shape(), std::move(out), {a.node()}, [](TensorNode& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    // subgradient 0 at exactly 0
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (p.val[i] > 0.0) p.grad[i] += self.grad[i];
  });
}

Tensor exp(const Tensor& a) {
  require(a.defined(), "exp: undefined operand");
  const auto& av = a.node()->val;
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = std::exp(av[i]);
  return make_op(a.shape(), std::move(out), {a.node()}, [](TensorNode& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * self.val[i];
  });
}

Tensor log(const Tensor& a) {
  require(a.defined(), "log: undefined operand");
  const auto& av = a.node()->val;
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) {
    require(av[i] > 0.0, "log: nonpositive input at element " + std::to_string(i));
    out[i] = std::log(av[i]);
  }
  return make_op(a.shape(), std::move(out), {a.node()}, [](TensorNode& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] / p.val[i];
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  require(a.defined(), "clamp: undefined operand");
  require(lo <= hi, "clamp: lo > hi");
  const auto& av = a.node()->val;
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = std::min(std::max(av[i], lo), hi);
  return make_op(a.shape(), std::move(out), {a.node()}, [lo, hi](TensorNode& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    // derivative 1 strictly inside (lo, hi), 0 at and outside the boundaries
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (p.val[i] > lo && p.val[i] < hi) p.grad[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  require(a.defined(), "sum: undefined operand");
  const auto& av = a.node()->val;
  double acc = 0.0;
  for (double v : av) acc += v;  // fixed left-to-right order
  return make_op({1}, {acc}, {a.node()}, [](TensorNode& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    const double g = self.grad[0];
    for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
  });
}

Tensor mean(const Tensor& a) {
  require(a.defined() && a.numel() > 0, "mean: empty operand");
  const auto& av = a.node()->val;
  double acc = 0.0;
  for (double v : av) acc += v;
  const double inv = 1.0 / static_cast<double>(av.size());
  return make_op({1}, {acc * inv}, {a.node()}, [inv](TensorNode& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    const double g = self.grad[0] * inv;
    for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
  });
}

Tensor sum_per_channel(const Tensor& a) {
  require(a.defined() && a.shape().size() == 4,
          "sum_per_channel: expected [N,C,H,W], got " +
              (a.defined() ? shape_str(a.shape()) : std::string("undefined")));
  const int N = a.shape()[0], C = a.shape()[1], H = a.shape()[2], W = a.shape()[3];
  const int64_t plane = static_cast<int64_t>(H) * W;
  const auto& av = a.node()->val;
  std::vector<double> out(static_cast<size_t>(C), 0.0);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* src = av.data() + (static_cast<int64_t>(n) * C + c) * plane;
      double acc = 0.0;
      for (int64_t i = 0; i < plane; ++i) acc += src[i];
      out[static_cast<size_t>(c)] += acc;
    }
  return make_op({C}, std::move(out), {a.node()}, [N, C, plane](TensorNode& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        double* dst = p.grad.data() + (static_cast<int64_t>(n) * C + c) * plane;
        const double g = self.grad[static_cast<size_t>(c)];
        for (int64_t i = 0; i < plane; ++i) dst[i] += g;
      }
  });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  check_same_shape(logits, targets, "bce_with_logits");
  const auto& lv = logits.node()->val;
  const auto& tv = targets.node()->val;
  std::vector<double> out(lv.size());
  for (size_t i = 0; i < lv.size(); ++i) {
    const double l = lv[i];
    out[i] = std::max(l, 0.0) - l * tv[i] + std::log1p(std::exp(-std::abs(l)));
  }
  return make_op(logits.shape(), std::move(out), {logits.node(), targets.node()},
                 [](TensorNode& self) {
                   auto& pl = *self.parents[0];
                   auto& pt = *self.parents[1];
                   if (pl.requires_grad) {
                     pl.ensure_grad();
                     for (size_t i = 0; i < self.grad.size(); ++i) {
                       const double l = pl.val[i];
                       const double sig =
                           l >= 0.0 ? 1.0 / (1.0 + std::exp(-l))
                                    : std::exp(l) / (1.0 + std::exp(l));
                       pl.grad[i] += self.grad[i] * (sig - pt.val[i]);
                     }
                   }
                   if (pt.requires_grad) {
                     pt.ensure_grad();
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       pt.grad[i] += self.grad[i] * (-pl.val[i]);
                   }
                 });
}

// ---- convolution ----

namespace {

struct ConvDims {
  int N, Cin, H, W, Cout, k, stride, pad, Ho, Wo;
  int64_t K() const { return static_cast<int64_t>(Cin) * k * k; }
  int64_t P() const { return static_cast<int64_t>(Ho) * Wo; }
};

void im2col(const double* src, const ConvDims& d, double* cols) {
  const int64_t P = d.P();
  int64_t r = 0;
  for (int ci = 0; ci < d.Cin; ++ci) {
    const double* plane = src + static_cast<int64_t>(ci) * d.H * d.W;
    for (int ky = 0; ky < d.k; ++ky)
      for (int kx = 0; kx < d.k; ++kx, ++r) {
        double* dst = cols + r * P;
        for (int oy = 0; oy < d.Ho; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          double* drow = dst + static_cast<int64_t>(oy) * d.Wo;
          if (iy < 0 || iy >= d.H) {
            std::fill(drow, drow + d.Wo, 0.0);
            continue;
          }
          const double* srow = plane + static_cast<int64_t>(iy) * d.W;
          if (d.stride == 1) {
            const int ox0 = std::max(0, d.pad - kx);
            const int ox1 = std::min(d.Wo, d.W + d.pad - kx);
            for (int ox = 0; ox < ox0; ++ox) drow[ox] = 0.0;
            if (ox1 > ox0) std::copy(srow + ox0 - d.pad + kx, srow + ox1 - d.pad + kx, drow + ox0);
            for (int ox = std::max(ox0, ox1); ox < d.Wo; ++ox) drow[ox] = 0.0;
          } else {
            for (int ox = 0; ox < d.Wo; ++ox) {
              const int ix = ox * d.stride - d.pad + kx;
              drow[ox] = (ix >= 0 && ix < d.W) ? srow[ix] : 0.0;
            }
          }
        }
      }
  }
}

void col2im_add(const double* cols, const ConvDims& d, double* dst) {
  const int64_t P = d.P();
  int64_t r = 0;
  for (int ci = 0; ci < d.Cin; ++ci) {
    double* plane = dst + static_cast<int64_t>(ci) * d.H * d.W;
    for (int ky = 0; ky < d.k; ++ky)
      for (int kx = 0; kx < d.k; ++kx, ++r) {
        const double* srow_base = cols + r * P;
        for (int oy = 0; oy < d.Ho; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.H) continue;
          const double* srow = srow_base + static_cast<int64_t>(oy) * d.Wo;
          double* drow = plane + static_cast<int64_t>(iy) * d.W;
          if (d.stride == 1) {
            const int ox0 = std::max(0, d.pad - kx);
            const int ox1 = std::min(d.Wo, d.W + d.pad - kx);
            double* base = drow - d.pad + kx;
            for (int ox = ox0; ox < ox1; ++ox) base[ox] += srow[ox];
          } else {
            for (int ox = 0; ox < d.Wo; ++ox) {
              const int ix = ox * d.stride - d.pad + kx;
              if (ix >= 0 && ix < d.W) drow[ix] += srow[ox];
            }
          }
        }
      }
  }
}

std::vector<double>& conv_scratch(size_t want) {
  thread_local std::vector<double> buf;
  if (buf.size() < want) buf.resize(want);
  return buf;
}

std::vector<double>& conv_scratch2(size_t want) {
  thread_local std::vector<double> buf;
  if (buf.size() < want) buf.resize(want);
  return buf;
}

}  // namespace

namespace {
std::vector<double>& conv_scratch3(size_t want) {
  thread_local std::vector<double> buf;
  if (buf.size() < want) buf.resize(want);
  return buf;
}
}  // namespace

static Tensor conv2d_impl(const Tensor& input, const Tensor& weight, const Tensor& bias,
                          int stride, int padding, bool fuse_relu) {
  require(input.defined() && weight.defined() && bias.defined(), "conv2d: undefined operand");
  require(input.shape().size() == 4, "conv2d: input must be [N,Cin,H,W], got " +
                                         shape_str(input.shape()));
  require(weight.shape().size() == 4, "conv2d: weight must be [Cout,Cin,k,k], got " +
                                          shape_str(weight.shape()));
  require(bias.shape().size() == 1, "conv2d: bias must be [Cout], got " + shape_str(bias.shape()));
  ConvDims d;
  d.N = input.shape()[0];
  d.Cin = input.shape()[1];
  d.H = input.shape()[2];
  d.W = input.shape()[3];
  d.Cout = weight.shape()[0];
  d.k = weight.shape()[2];
  d.stride = stride;
  d.pad = padding;
  require(weight.shape()[1] == d.Cin,
          "conv2d: weight Cin " + std::to_string(weight.shape()[1]) + " != input Cin " +
              std::to_string(d.Cin));
  require(weight.shape()[3] == d.k, "conv2d: kernel must be square, got " +
                                        shape_str(weight.shape()));
  require(d.k % 2 == 1, "conv2d: kernel size must be odd, got " + std::to_string(d.k));
  require(bias.shape()[0] == d.Cout, "conv2d: bias size " + std::to_string(bias.shape()[0]) +
                                         " != Cout " + std::to_string(d.Cout));
  require(stride >= 1 && padding >= 0, "conv2d: invalid stride/padding");
  d.Ho = (d.H + 2 * padding - d.k) / stride + 1;
  d.Wo = (d.W + 2 * padding - d.k) / stride + 1;
  require(d.H + 2 * padding >= d.k && d.W + 2 * padding >= d.k && d.Ho >= 1 && d.Wo >= 1,
          "conv2d: output would be empty for input " + shape_str(input.shape()) + " kernel " +
              std::to_string(d.k) + " stride " + std::to_string(stride) + " pad " +
              std::to_string(padding));

  const int64_t K = d.K(), P = d.P();
  std::vector<double> out(static_cast<size_t>(d.N) * d.Cout * P);
  auto& cols = conv_scratch(static_cast<size_t>(K) * P);
  CMapRM Wm(weight.node()->val.data(), d.Cout, K);
  Eigen::Map<const Eigen::VectorXd> bm(bias.node()->val.data(), d.Cout);
  for (int n = 0; n < d.N; ++n) {
    im2col(input.node()->val.data() + static_cast<int64_t>(n) * d.Cin * d.H * d.W, d, cols.data());
    MapRM Out(out.data() + static_cast<int64_t>(n) * d.Cout * P, d.Cout, P);
    CMapRM Cm(cols.data(), K, P);
    Out.noalias() = Wm * Cm;
    Out.colwise() += bm;
  }
  if (fuse_relu)
    for (auto& v : out) v = v > 0.0 ? v : 0.0;

  return make_op({d.N, d.Cout, d.Ho, d.Wo}, std::move(out),
                 {input.node(), weight.node(), bias.node()}, [d, fuse_relu](TensorNode& self) {
                   auto& pin = *self.parents[0];
                   auto& pw = *self.parents[1];
                   auto& pb = *self.parents[2];
                   const int64_t K = d.K(), P = d.P();
                   auto& cols = conv_scratch(static_cast<size_t>(K) * P);
                   auto& gcols = conv_scratch2(static_cast<size_t>(K) * P);
                   auto& gmask = conv_scratch3(fuse_relu ? static_cast<size_t>(d.Cout) * P : 0);
                   CMapRM Wm(pw.val.data(), d.Cout, K);
                   if (pin.requires_grad) pin.ensure_grad();
                   if (pw.requires_grad) pw.ensure_grad();
                   if (pb.requires_grad) pb.ensure_grad();
                   for (int n = 0; n < d.N; ++n) {
                     const int64_t off = static_cast<int64_t>(n) * d.Cout * P;
                     const double* gsrc = self.grad.data() + off;
                     if (fuse_relu) {
                       // pre-activation gradient: zero wherever the relu clipped
                       const double* y = self.val.data() + off;
                       for (int64_t i = 0; i < d.Cout * P; ++i)
                         gmask[static_cast<size_t>(i)] = y[i] > 0.0 ? gsrc[i] : 0.0;
                       gsrc = gmask.data();
                     }
                     CMapRM G(gsrc, d.Cout, P);
                     if (pw.requires_grad || pin.requires_grad)
                       im2col(pin.val.data() + static_cast<int64_t>(n) * d.Cin * d.H * d.W, d,
                              cols.data());
                     if (pw.requires_grad) {
                       MapRM gW(pw.grad.data(), d.Cout, K);
                       CMapRM Cm(cols.data(), K, P);
                       gW.noalias() += G * Cm.transpose();
                     }
                     if (pb.requires_grad) {
                       // fixed-order accumulation; Eigen's redux would peel to
                       // an address-dependent alignment boundary
                       for (int co = 0; co < d.Cout; ++co) {
                         const double* grow = gsrc + static_cast<int64_t>(co) * P;
                         double acc = 0.0;
                         for (int64_t i = 0; i < P; ++i) acc += grow[i];
                         pb.grad[static_cast<size_t>(co)] += acc;
                       }
                     }
                     if (pin.requires_grad) {
                       MapRM Gc(gcols.data(), K, P);
                       Gc.noalias() = Wm.transpose() * G;
                       col2im_add(gcols.data(),
                                  d, pin.grad.data() + static_cast<int64_t>(n) * d.Cin * d.H * d.W);
                     }
                   }
                 });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  return conv2d_impl(input, weight, bias, stride, padding, false);
}

Tensor conv2d_relu(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                   int padding) {
  return conv2d_impl(input, weight, bias, stride, padding, true);
}

// ---- softmax over channels ----

Tensor softmax_channels(const Tensor& x) {
  require(x.defined() && x.shape().size() == 4,
          "softmax_channels: expected [N,C,H,W], got " +
              (x.defined() ? shape_str(x.shape()) : std::string("undefined")));
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const int64_t plane = static_cast<int64_t>(H) * W;
  const auto& xv = x.node()->val;
  std::vector<double> out(xv.size());
  for (int n = 0; n < N; ++n) {
    const double* base = xv.data() + static_cast<int64_t>(n) * C * plane;
    double* obase = out.data() + static_cast<int64_t>(n) * C * plane;
    for (int64_t p = 0; p < plane; ++p) {
      double mx = base[p];
      for (int c = 1; c < C; ++c) mx = std::max(mx, base[c * plane + p]);
      double denom = 0.0;
      for (int c = 0; c < C; ++c) {
        const double e = std::exp(base[c * plane + p] - mx);
        obase[c * plane + p] = e;
        denom += e;
      }
      const double inv = 1.0 / denom;
      for (int c = 0; c < C; ++c) obase[c * plane + p] *= inv;
    }
  }
  return make_op(x.shape(), std::move(out), {x.node()}, [N, C, plane](TensorNode& self) {
    auto& p0 = *self.parents[0];
    p0.ensure_grad();
    for (int n = 0; n < N; ++n) {
      const double* y = self.val.data() + static_cast<int64_t>(n) * C * plane;
      const double* g = self.grad.data() + static_cast<int64_t>(n) * C * plane;
      double* gx = p0.grad.data() + static_cast<int64_t>(n) * C * plane;
      for (int64_t p = 0; p < plane; ++p) {
        double dot = 0.0;
        for (int c = 0; c < C; ++c) dot += g[c * plane + p] * y[c * plane + p];
        for (int c = 0; c < C; ++c)
          gx[c * plane + p] += y[c * plane + p] * (g[c * plane + p] - dot);
      }
    }
  });
}

Tensor log_softmax_channels(const Tensor& x) {
  require(x.defined() && x.shape().size() == 4,
          "log_softmax_channels: expected [N,C,H,W], got " +
              (x.defined() ? shape_str(x.shape()) : std::string("undefined")));
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const int64_t plane = static_cast<int64_t>(H) * W;
  const auto& xv = x.node()->val;
  std::vector<double> out(xv.size());
  for (int n = 0; n < N; ++n) {
    const double* base = xv.data() + static_cast<int64_t>(n) * C * plane;
    double* obase = out.data() + static_cast<int64_t>(n) * C * plane;
    for (int64_t p = 0; p < plane; ++p) {
      double mx = base[p];
      for (int c = 1; c < C; ++c) mx = std::max(mx, base[c * plane + p]);
      double denom = 0.0;
      for (int c = 0; c < C; ++c) denom += std::exp(base[c * plane + p] - mx);
      const double lse = mx + std::log(denom);
      for (int c = 0; c < C; ++c) obase[c * plane + p] = base[c * plane + p] - lse;
    }
  }
  return make_op(x.shape(), std::move(out), {x.node()}, [N, C, plane](TensorNode& self) {
    auto& p0 = *self.parents[0];
    p0.ensure_grad();
    for (int n = 0; n < N; ++n) {
      const double* logp = self.val.data() + static_cast<int64_t>(n) * C * plane;
      const double* g = self.grad.data() + static_cast<int64_t>(n) * C * plane;
      double* gx = p0.grad.data() + static_cast<int64_t>(n) * C * plane;
      for (int64_t p = 0; p < plane; ++p) {
        double gsum = 0.0;
        for (int c = 0; c < C; ++c) gsum += g[c * plane + p];
        for (int c = 0; c < C; ++c)
          gx[c * plane + p] += g[c * plane + p] - std::exp(logp[c * plane + p]) * gsum;
      }
    }
  });
}

// ---- pooling / resampling ----

static void check_4d(const Tensor& x, const char* op) {
  require(x.defined() && x.shape().size() == 4,
          std::string(op) + ": expected [N,C,H,W], got " +
              (x.defined() ? shape_str(x.shape()) : std::string("undefined")));
}

Tensor max_pool2d(const Tensor& x, int k) {
  check_4d(x, "max_pool2d");
  require(k >= 1, "max_pool2d: k must be >= 1");
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const int Ho = H / k, Wo = W / k;
  require(Ho >= 1 && Wo >= 1, "max_pool2d: input too small for k=" + std::to_string(k));
  const auto& xv = x.node()->val;
  std::vector<double> out(static_cast<size_t>(N) * C * Ho * Wo);
  auto arg = std::make_shared<std::vector<int64_t>>(out.size());
  int64_t o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* plane = xv.data() + (static_cast<int64_t>(n) * C + c) * H * W;
      const int64_t pbase = (static_cast<int64_t>(n) * C + c) * H * W;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox, ++o) {
          double best = plane[static_cast<int64_t>(oy) * k * W + ox * k];
          int64_t besti = static_cast<int64_t>(oy) * k * W + ox * k;
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
              const int64_t idx = (static_cast<int64_t>(oy) * k + dy) * W + ox * k + dx;
              if (plane[idx] > best) {  // ties keep the first in scan order
                best = plane[idx];
                besti = idx;
              }
            }
          out[static_cast<size_t>(o)] = best;
          (*arg)[static_cast<size_t>(o)] = pbase + besti;
        }
    }
  return make_op({N, C, Ho, Wo}, std::move(out), {x.node()}, [arg](TensorNode& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      p.grad[static_cast<size_t>((*arg)[i])] += self.grad[i];
  });
}

Tensor avg_pool2d(const Tensor& x, int k) {
  check_4d(x, "avg_pool2d");
  require(k >= 1, "avg_pool2d: k must be >= 1");
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const int Ho = H / k, Wo = W / k;
  require(Ho >= 1 && Wo >= 1, "avg_pool2d: input too small for k=" + std::to_string(k));
  const auto& xv = x.node()->val;
  std::vector<double> out(static_cast<size_t>(N) * C * Ho * Wo);
  const double inv = 1.0 / (static_cast<double>(k) * k);
  int64_t o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* plane = xv.data() + (static_cast<int64_t>(n) * C + c) * H * W;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox, ++o) {
          double acc = 0.0;
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx)
              acc += plane[(static_cast<int64_t>(oy) * k + dy) * W + ox * k + dx];
          out[static_cast<size_t>(o)] = acc * inv;
        }
    }
  return make_op({N, C, Ho, Wo}, std::move(out), {x.node()},
                 [N, C, H, W, Ho, Wo, k, inv](TensorNode& self) {
                   auto& p = *self.parents[0];
                   p.ensure_grad();
                   int64_t o = 0;
                   for (int n = 0; n < N; ++n)
                     for (int c = 0; c < C; ++c) {
                       double* plane = p.grad.data() + (static_cast<int64_t>(n) * C + c) * H * W;
                       for (int oy = 0; oy < Ho; ++oy)
                         for (int ox = 0; ox < Wo; ++ox, ++o) {
                           const double g = self.grad[static_cast<size_t>(o)] * inv;
                           for (int dy = 0; dy < k; ++dy)
                             for (int dx = 0; dx < k; ++dx)
                               plane[(static_cast<int64_t>(oy) * k + dy) * W + ox * k + dx] += g;
                         }
                     }
                 });
}

Tensor nearest_pool2d(const Tensor& x, int k) {
  check_4d(x, "nearest_pool2d");
  require(k >= 1, "nearest_pool2d: k must be >= 1");
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const int Ho = H / k, Wo = W / k;
  require(Ho >= 1 && Wo >= 1, "nearest_pool2d: input too small for k=" + std::to_string(k));
  const auto& xv = x.node()->val;
  std::vector<double> out(static_cast<size_t>(N) * C * Ho * Wo);
  int64_t o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* plane = xv.data() + (static_cast<int64_t>(n) * C + c) * H * W;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox, ++o)
          out[static_cast<size_t>(o)] = plane[static_cast<int64_t>(oy) * k * W + ox * k];
    }
  return make_op({N, C, Ho, Wo}, std::move(out), {x.node()},
                 [N, C, H, W, Ho, Wo, k](TensorNode& self) {
                   auto& p = *self.parents[0];
                   p.ensure_grad();
                   int64_t o = 0;
                   for (int n = 0; n < N; ++n)
                     for (int c = 0; c < C; ++c) {
                       double* plane = p.grad.data() + (static_cast<int64_t>(n) * C + c) * H * W;
                       for (int oy = 0; oy < Ho; ++oy)
                         for (int ox = 0; ox < Wo; ++ox, ++o)
                           plane[static_cast<int64_t>(oy) * k * W + ox * k] +=
                               self.grad[static_cast<size_t>(o)];
                     }
                 });
}

Tensor upsample_nearest2x(const Tensor& x) {
  check_4d(x, "upsample_nearest2x");
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const auto& xv = x.node()->val;
  std::vector<double> out(static_cast<size_t>(N) * C * 4 * H * W);
  for (int nc = 0; nc < N * C; ++nc) {
    const double* src = xv.data() + static_cast<int64_t>(nc) * H * W;
    double* dst = out.data() + static_cast<int64_t>(nc) * 4 * H * W;
    for (int y = 0; y < 2 * H; ++y) {
      const double* srow = src + static_cast<int64_t>(y / 2) * W;
      double* drow = dst + static_cast<int64_t>(y) * 2 * W;
      for (int xq = 0; xq < 2 * W; ++xq) drow[xq] = srow[xq / 2];
    }
  }
  return make_op({N, C, 2 * H, 2 * W}, std::move(out), {x.node()},
                 [N, C, H, W](TensorNode& self) {
                   auto& p = *self.parents[0];
                   p.ensure_grad();
                   for (int nc = 0; nc < N * C; ++nc) {
                     double* dst = p.grad.data() + static_cast<int64_t>(nc) * H * W;
                     const double* g = self.grad.data() + static_cast<int64_t>(nc) * 4 * H * W;
                     for (int y = 0; y < 2 * H; ++y)
                       for (int xq = 0; xq < 2 * W; ++xq)
                         dst[static_cast<int64_t>(y / 2) * W + xq / 2] +=
                             g[static_cast<int64_t>(y) * 2 * W + xq];
                   }
                 });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  check_4d(a, "concat_channels");
  check_4d(b, "concat_channels");
  const int N = a.shape()[0], Ca = a.shape()[1], H = a.shape()[2], W = a.shape()[3];
  const int Cb = b.shape()[1];
  require(b.shape()[0] == N && b.shape()[2] == H && b.shape()[3] == W,
          "concat_channels: shape mismatch " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
  const int64_t plane = static_cast<int64_t>(H) * W;
  const auto& avv = a.node()->val;
  const auto& bvv = b.node()->val;
  std::vector<double> out(static_cast<size_t>(N) * (Ca + Cb) * plane);
  for (int n = 0; n < N; ++n) {
    std::copy(avv.data() + static_cast<int64_t>(n) * Ca * plane,
              avv.data() + static_cast<int64_t>(n + 1) * Ca * plane,
              out.data() + static_cast<int64_t>(n) * (Ca + Cb) * plane);
    std::copy(bvv.data() + static_cast<int64_t>(n) * Cb * plane,
              bvv.data() + static_cast<int64_t>(n + 1) * Cb * plane,
              out.data() + static_cast<int64_t>(n) * (Ca + Cb) * plane + Ca * plane);
  }
  return make_op({N, Ca + Cb, H, W}, std::move(out), {a.node(), b.node()},
                 [N, Ca, Cb, plane](TensorNode& self) {
                   auto& pa = *self.parents[0];
                   auto& pb = *self.parents[1];
                   for (int n = 0; n < N; ++n) {
                     const double* g = self.grad.data() +
                                       static_cast<int64_t>(n) * (Ca + Cb) * plane;
                     if (pa.requires_grad) {
                       pa.ensure_grad();
                       double* ga = pa.grad.data() + static_cast<int64_t>(n) * Ca * plane;
                       for (int64_t i = 0; i < Ca * plane; ++i) ga[i] += g[i];
                     }
                     if (pb.requires_grad) {
                       pb.ensure_grad();
                       double* gb = pb.grad.data() + static_cast<int64_t>(n) * Cb * plane;
                       for (int64_t i = 0; i < Cb * plane; ++i) gb[i] += g[Ca * plane + i];
                     }
                   }
                 });
}

// ---- small-matrix ops ----

Tensor slice_image(const Tensor& x, int n, int c) {
  check_4d(x, "slice_image");
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  require(n >= 0 && n < N && c >= 0 && c < C,
          "slice_image: index (" + std::to_string(n) + "," + std::to_string(c) +
              ") out of range for " + shape_str(x.shape()));
  const int64_t plane = static_cast<int64_t>(H) * W;
  const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
  const auto& xv = x.node()->val;
  std::vector<double> out(xv.begin() + off, xv.begin() + off + plane);
  return make_op({H, W}, std::move(out), {x.node()}, [off, plane](TensorNode& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (int64_t i = 0; i < plane; ++i) p.grad[static_cast<size_t>(off + i)] += self.grad[i];
  });
}

Tensor unfold_patches(const Tensor& hw, int side) {
  require(hw.defined() && hw.shape().size() == 2,
          "unfold_patches: expected [H,W], got " +
              (hw.defined() ? shape_str(hw.shape()) : std::string("undefined")));
  require(side >= 1, "unfold_patches: side must be >= 1");
  const int H = hw.shape()[0], W = hw.shape()[1];
  require(H >= side && W >= side, "unfold_patches: image " + shape_str(hw.shape()) +
                                      " smaller than patch side " + std::to_string(side));
  const int Hm = H - side + 1, Wm = W - side + 1;
  const int R = side * side;
  const int64_t M = static_cast<int64_t>(Hm) * Wm;
  const auto& xv = hw.node()->val;
  std::vector<double> out(static_cast<size_t>(R) * M);
  for (int dy = 0; dy < side; ++dy)
    for (int dx = 0; dx < side; ++dx) {
      double* dst = out.data() + static_cast<int64_t>(dy * side + dx) * M;
      for (int y = 0; y < Hm; ++y) {
        const double* srow = xv.data() + static_cast<int64_t>(y + dy) * W + dx;
        std::copy(srow, srow + Wm, dst + static_cast<int64_t>(y) * Wm);
      }
    }
  return make_op({R, static_cast<int>(M)}, std::move(out), {hw.node()},
                 [side, W, Hm, Wm, M](TensorNode& self) {
                   auto& p = *self.parents[0];
                   p.ensure_grad();
                   for (int dy = 0; dy < side; ++dy)
                     for (int dx = 0; dx < side; ++dx) {
                       const double* g = self.grad.data() +
                                         static_cast<int64_t>(dy * side + dx) * M;
                       for (int y = 0; y < Hm; ++y) {
                         double* drow = p.grad.data() + static_cast<int64_t>(y + dy) * W + dx;
                         for (int x = 0; x < Wm; ++x) drow[x] += g[static_cast<int64_t>(y) * Wm + x];
                       }
                     }
                 });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: empty input list");
  const int R = parts[0].shape()[0];
  int64_t Mtot = 0;
  std::vector<NodePtr> nodes;
  std::vector<int> widths;
  for (const auto& t : parts) {
    require(t.defined() && t.shape().size() == 2 && t.shape()[0] == R,
            "concat_cols: all parts must be 2-D with matching row count");
    widths.push_back(t.shape()[1]);
    Mtot += t.shape()[1];
    nodes.push_back(t.node());
  }
  std::vector<double> out(static_cast<size_t>(R) * Mtot);
  int64_t coff = 0;
  for (size_t i = 0; i < nodes.size(); ++i) {
    const auto& v = nodes[i]->val;
    const int M = widths[i];
    for (int r = 0; r < R; ++r)
      std::copy(v.data() + static_cast<int64_t>(r) * M, v.data() + static_cast<int64_t>(r + 1) * M,
                out.data() + static_cast<int64_t>(r) * Mtot + coff);
    coff += M;
  }
  return make_op({R, static_cast<int>(Mtot)}, std::move(out), std::move(nodes),
                 [R, widths, Mtot](TensorNode& self) {
                   int64_t coff = 0;
                   for (size_t i = 0; i < self.parents.size(); ++i) {
                     auto& p = *self.parents[i];
                     const int M = widths[i];
                     if (p.requires_grad) {
                       p.ensure_grad();
                       for (int r = 0; r < R; ++r) {
                         const double* g = self.grad.data() + static_cast<int64_t>(r) * Mtot + coff;
                         double* dst = p.grad.data() + static_cast<int64_t>(r) * M;
                         for (int m = 0; m < M; ++m) dst[m] += g[m];
                       }
                     }
                     coff += M;
                   }
                 });
}

Tensor sub_row_mean(const Tensor& rm) {
  require(rm.defined() && rm.shape().size() == 2,
          "sub_row_mean: expected [R,M], got " +
              (rm.defined() ? shape_str(rm.shape()) : std::string("undefined")));
  const int R = rm.shape()[0], M = rm.shape()[1];
  require(M >= 1, "sub_row_mean: empty rows");
  const auto& xv = rm.node()->val;
  std::vector<double> out(xv.size());
  const double inv = 1.0 / M;
  for (int r = 0; r < R; ++r) {
    const double* src = xv.data() + static_cast<int64_t>(r) * M;
    double mu = 0.0;
    for (int m = 0; m < M; ++m) mu += src[m];
    mu *= inv;
    double* dst = out.data() + static_cast<int64_t>(r) * M;
    for (int m = 0; m < M; ++m) dst[m] = src[m] - mu;
  }
  return make_op(rm.shape(), std::move(out), {rm.node()}, [R, M, inv](TensorNode& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (int r = 0; r < R; ++r) {
      const double* g = self.grad.data() + static_cast<int64_t>(r) * M;
      double gmu = 0.0;
      for (int m = 0; m < M; ++m) gmu += g[m];
      gmu *= inv;
      double* dst = p.grad.data() + static_cast<int64_t>(r) * M;
      for (int m = 0; m < M; ++m) dst[m] += g[m] - gmu;
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.defined() && b.defined(), "matmul: undefined operand");
  require(a.shape().size() == 2 && b.shape().size() == 2,
          "matmul: expected 2-D operands, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  require(b.shape()[0] == k, "matmul: inner dims differ, " + shape_str(a.shape()) + " x " +
                                 shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(m) * n);
  {
    CMapRM A(a.node()->val.data(), m, k);
    CMapRM B(b.node()->val.data(), k, n);
    MapRM C(out.data(), m, n);
    C.noalias() = A * B;
  }
  return make_op({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    CMapRM G(self.grad.data(), m, n);
    if (pa.requires_grad) {
      pa.ensure_grad();
      CMapRM B(pb.val.data(), k, n);
      MapRM gA(pa.grad.data(), m, k);
      gA.noalias() += G * B.transpose();
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      CMapRM A(pa.val.data(), m, k);
      MapRM gB(pb.grad.data(), k, n);
      gB.noalias() += A.transpose() * G;
    }
  });
}

Tensor transpose2d(const Tensor& a) {
  require(a.defined() && a.shape().size() == 2,
          "transpose2d: expected 2-D, got " +
              (a.defined() ? shape_str(a.shape()) : std::string("undefined")));
  const int m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(static_cast<size_t>(m) * n);
  const auto& av = a.node()->val;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<int64_t>(j) * m + i] = av[static_cast<int64_t>(i) * n + j];
  return make_op({n, m}, std::move(out), {a.node()}, [m, n](TensorNode& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        p.grad[static_cast<int64_t>(i) * n + j] += self.grad[static_cast<int64_t>(j) * m + i];
  });
}

namespace {

// Lower-triangular Cholesky of a symmetric matrix; reports the failing pivot.
Eigen::MatrixXd chol_lower(const Eigen::MatrixXd& S, const char* ctx) {
  const int n = static_cast<int>(S.rows());
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double acc = S(i, j);
      for (int k = 0; k < j; ++k) acc -= L(i, k) * L(j, k);
      if (i == j) {
        if (!(acc > 0.0) || !std::isfinite(acc))
          throw SingularMatrixError(std::string(ctx) + ": matrix not positive definite", i);
        L(i, i) = std::sqrt(acc);
      } else {
        L(i, j) = acc / L(j, j);
      }
    }
  }
  return L;
}

Eigen::MatrixXd spd_inverse_from_chol(const Eigen::MatrixXd& L) {
  const int n = static_cast<int>(L.rows());
  Eigen::MatrixXd Linv =
      L.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
  return Linv.transpose() * Linv;
}

Eigen::MatrixXd symmetrized(const Tensor& a, const char* op) {
  require(a.defined() && a.shape().size() == 2 && a.shape()[0] == a.shape()[1],
          std::string(op) + ": expected square matrix, got " +
              (a.defined() ? shape_str(a.shape()) : std::string("undefined")));
  const int n = a.shape()[0];
  CMapRM A(a.node()->val.data(), n, n);
  return 0.5 * (Eigen::MatrixXd(A) + Eigen::MatrixXd(A.transpose()));
}

}  // namespace

Tensor inverse_spd(const Tensor& a) {
  Eigen::MatrixXd S = symmetrized(a, "inverse_spd");
  const int n = static_cast<int>(S.rows());
  Eigen::MatrixXd Y = spd_inverse_from_chol(chol_lower(S, "inverse_spd"));
  std::vector<double> out(static_cast<size_t>(n) * n);
  MapRM(out.data(), n, n) = Y;
  return make_op({n, n}, std::move(out), {a.node()}, [n, Y](TensorNode& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    CMapRM G(self.grad.data(), n, n);
    const Eigen::MatrixXd Gs = 0.5 * (Eigen::MatrixXd(G) + Eigen::MatrixXd(G.transpose()));
    const Eigen::MatrixXd gA = -(Y * Gs * Y);
    MapRM(p.grad.data(), n, n) += gA;
  });
}

Tensor cholesky_logdet(const Tensor& a) {
  Eigen::MatrixXd S = symmetrized(a, "cholesky_logdet");
  const int n = static_cast<int>(S.rows());
  Eigen::MatrixXd L = chol_lower(S, "cholesky_logdet");
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(L(i, i));
  return make_op({1}, {logdet}, {a.node()}, [n, L](TensorNode& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    const Eigen::MatrixXd Sinv = spd_inverse_from_chol(L);
    MapRM(p.grad.data(), n, n) += self.grad[0] * Sinv;
  });
}

}  // namespace samcl
