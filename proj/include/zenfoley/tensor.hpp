#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "zenfoley/common.hpp"

namespace zenfoley {

// Dense float32 tensors with tape-based reverse-mode differentiation.
// Storage is 32-bit row-major; every reduction (matmul inner products, sums,
// softmax denominators, convolution accumulators, gradient reductions)
// accumulates in 64-bit before casting back to storage precision.

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;  // sized lazily by the graph that differentiates
  bool requires_grad = false;
  bool leaf = true;

  int64_t size() const { return static_cast<int64_t>(values.size()); }
  void ensure_grad() {
    grad.assign(values.size(), 0.0f);
  }
};

class Tensor;
class GradientMap;

// Tape of recorded primitive operations. Constructing a Graph makes it the
// current recording target for the thread; ops executed while one is current
// append their backward closures. backward() replays the tape once, in
// reverse, then marks the graph consumed. With no graph current, ops run
// forward-only, which is what makes inference on frozen models reentrant.
class Graph {
 public:
  Graph();
  ~Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  GradientMap backward(const Tensor& loss);
  bool consumed() const { return consumed_; }
  size_t num_entries() const { return entries_.size(); }

  static Graph* current();
  static bool recording();

  // Op implementation hooks.
  void add_entry(std::function<void()> fn);
  void touch(const std::shared_ptr<TensorNode>& n);

 private:
  std::vector<std::function<void()>> entries_;
  std::vector<std::shared_ptr<TensorNode>> touched_;
  std::unordered_set<const TensorNode*> touched_set_;
  bool consumed_ = false;
  Graph* prev_ = nullptr;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor constant(Shape s, float v, bool requires_grad = false);
  static Tensor from_values(Shape s, std::vector<float> v,
                            bool requires_grad = false);
  static Tensor scalar(float v);
  static Tensor random_uniform(Shape s, SplitMix64& rng, float lo, float hi,
                               bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return node_->size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  std::span<const float> values() const {
    return {node_->values.data(), node_->values.size()};
  }
  // Direct mutation is for leaves only (parameters, probe inputs).
  std::span<float> values_mut() {
    return {node_->values.data(), node_->values.size()};
  }

  float item() const;  // contract error unless size()==1
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  Tensor grad() const;  // copy of the gradient buffer as a fresh leaf

  Tensor clone() const;  // deep copy, detached leaf

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

class GradientMap {
 public:
  bool contains(const Tensor& leaf) const;
  Tensor at(const Tensor& leaf) const;  // contract error when absent
  size_t size() const { return grads_.size(); }

 private:
  friend class Graph;
  std::unordered_map<const TensorNode*, Tensor> grads_;
};

// --- elementwise / structural primitives -----------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor elu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor softmax_lastdim(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, int axis);
Tensor mean_axis(const Tensor& x, int axis);
Tensor concat_axis0(const Tensor& a, const Tensor& b);
Tensor concat_axis(const Tensor& a, const Tensor& b, int axis);
Tensor slice(const Tensor& x, int axis, int64_t begin, int64_t end);
Tensor reshape(const Tensor& x, Shape s);
Tensor transpose(const Tensor& x);        // rank 2
Tensor transpose_last2(const Tensor& x);  // rank >= 2
Tensor stop_gradient(const Tensor& x);

// Forward value is a bit-exact copy of `value`; the incoming gradient is
// routed entirely to `grad_path` (same shape). This is the quantizer's
// straight-through estimator without the float round-off of value +
// (quantized - value).
Tensor straight_through(const Tensor& value, const Tensor& grad_path);

struct NamedTensor {
  std::string name;
  Tensor t;
};

// Rows of `table` gathered at `indices` (shape `index_shape`); output shape is
// index_shape + [table.dim(1)]. Gradient scatters into `table`.
Tensor embed_lookup(const std::vector<int32_t>& indices,
                    const Shape& index_shape, const Tensor& table);

// Mean over rows of -log softmax(logits_row)[target]; numerically stable
// (log-sum-exp in double). logits (N, K), targets length N.
Tensor cross_entropy_rows(const Tensor& logits,
                          const std::vector<int32_t>& targets);

// --- matrix products --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);  // (M,K)x(K,N)
Tensor bmm(const Tensor& a, const Tensor& b);     // (B,M,K)x(B,K,N)

// --- convolution building blocks ---------------------------------------------
// conv1d: x (B,Cin,N), w (Cout,Cin,L), bias (Cout) or undefined. The input is
// zero-padded by `left_pad` on the left only; out length =
// floor((N + left_pad - L)/stride) + 1. left_pad = L-1 gives the causal form.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
              int left_pad);

// conv1d_transpose: x (B,Cin,M), w (Cin,Cout,L).
// out[t] = sum over u with 0 <= t-u*stride < L of w[t-u*stride]*x[u];
// output length is exactly M*stride, so out[t] never reads past floor(t/S).
Tensor conv1d_transpose(const Tensor& x, const Tensor& w, const Tensor& bias,
                        int stride);

// conv2d: x (B,Cin,H,W), w (Cout,Cin,kh,kw), symmetric zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
              int pad);

// conv2d_transpose: x (B,Cin,H,W), w (Cin,Cout,kh,kw);
// out extent = (in-1)*stride - 2*pad + k.
Tensor conv2d_transpose(const Tensor& x, const Tensor& w, const Tensor& bias,
                        int stride, int pad);

// Codebook gather: indices (B,h,w flattened), cb (K,D) -> (B,D,h,w).
// Gradient scatters into the codebook.
Tensor codebook_gather(const std::vector<int32_t>& indices, int64_t batch,
                       int64_t rows, int64_t cols, const Tensor& cb);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace zenfoley
