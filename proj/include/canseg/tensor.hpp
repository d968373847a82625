#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace canseg::nn {

/// Tensor extents, outermost first. Networks use (C, D, H, W) activations,
/// (Co, Ci, k, k, k) convolution weights and (C) biases.
using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);

struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;

  [[nodiscard]] std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.f);
  }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.f);
  }
};

using NodePtr = std::shared_ptr<Node>;

/// Value-semantic handle on an autograd node.
struct Tensor {
  NodePtr n;

  Tensor() = default;
  explicit Tensor(NodePtr p) : n(std::move(p)) {}

  [[nodiscard]] const Shape& shape() const { return n->shape; }
  [[nodiscard]] std::size_t size() const { return n->size(); }
  float* data() { return n->value.data(); }
  [[nodiscard]] const float* data() const { return n->value.data(); }
  [[nodiscard]] bool defined() const { return n != nullptr; }
};

Tensor zeros(Shape s);
Tensor full(Shape s, float v);
Tensor from_data(Shape s, const float* src);
Tensor param(Shape s, std::string name);                       // zero-initialized
Tensor param_randn(Shape s, float stddev, std::mt19937_64& rng, std::string name);

/// Gradient recording is on by default; disable for inference.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Reverse-mode sweep from a scalar node; seeds d(root)/d(root) = seed.
void backward(const Tensor& root, float seed = 1.f);

/// Sweep from an arbitrary node with an explicit cotangent (same size).
void backward_seeded(const Tensor& root, const float* seed);

// ---- operators ----------------------------------------------------------

/// 3D convolution (cross-correlation). kernel is taken from w's shape
/// (1 or 3); pad in {0,1}; stride in {1,2}. pad=0 with k=3 is a "valid"
/// convolution that shrinks each axis by 2.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, int stride = 1, int pad = 1);
Tensor leaky_relu(const Tensor& x, float slope = 0.02f);
Tensor sigmoid(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor concat_c(const Tensor& a, const Tensor& b);
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     float eps = 1e-5f);
Tensor dropout(const Tensor& x, float p, std::mt19937_64& rng, bool training);
Tensor global_avg_pool(const Tensor& x);              // (C,D,H,W) -> (C,1,1,1)
Tensor scale_channels(const Tensor& x, const Tensor& gates);  // gates (C,1,1,1)
Tensor upsample_trilinear2x(const Tensor& x);
Tensor upsample_nearest(const Tensor& x, int factor);
Tensor softmax_c(const Tensor& x);                    // softmax over channel axis

/// Mean cross-entropy between per-voxel class logits (C,D,H,W) and target
/// class indices; returns a scalar node.
Tensor softmax_cross_entropy(const Tensor& logits, const std::uint8_t* target);

namespace detail {
/// Allocate an op result wired to its parents (grad mode permitting).
Tensor op_output(Shape s, std::vector<NodePtr> parents);
}  // namespace detail

}  // namespace canseg::nn
