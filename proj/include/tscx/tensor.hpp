#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tscx/rng.hpp"

namespace tscx {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Handle to a dense row-major float32 array, optionally linked into a Tape.
/// `node < 0` marks a constant: it participates in forward computation but
/// receives no gradient. Values are immutable once produced; only a tape's
/// grad buffers mutate.
struct Tensor {
  std::shared_ptr<std::vector<float>> data;
  Shape shape;
  int node = -1;

  int64_t numel() const { return shape_numel(shape); }
  bool tracked() const { return node >= 0; }
  float scalar() const;
};

Tensor constant(std::vector<float> v, Shape shape);
Tensor constant(std::shared_ptr<std::vector<float>> v, Shape shape);
Tensor zeros(Shape shape);

enum class Act { ReLU, Sigmoid, Tanh };
enum class PoolKind { Avg, Max };

/// Append-only reverse-mode gradient tape. Node inputs always precede the
/// node itself, so a reverse index sweep is a valid reverse topological
/// order. Storage is float32; every reduction accumulates in double.
/// Single-writer: one tape never serves concurrent training steps.
class Tape {
 public:
  /// Tracked leaf over an existing buffer (params bind through this).
  Tensor leaf(std::shared_ptr<std::vector<float>> data, Shape shape);
  Tensor param(std::vector<float> v, Shape shape);

  // Elementwise (shapes must match exactly; no broadcasting).
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  /// mul_c * x + add_c, elementwise.
  Tensor affine(const Tensor& x, float mul_c, float add_c);
  Tensor activation(const Tensor& x, Act kind);
  /// Train mode: zero each element with probability `rate`, scale survivors
  /// by 1/(1-rate). Eval mode or rate 0: identity (x returned unchanged).
  Tensor dropout(const Tensor& x, float rate, bool train, Rng& rng);

  Tensor matmul(const Tensor& a, const Tensor& b);
  /// x[b,n] * w[m,n]^T (+ bias[m]) -> [b,m].
  Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
  Tensor linear(const Tensor& x, const Tensor& w);
  /// x[(b,)c_in,l], w[c_out,c_in,k], bias[c_out] -> [(b,)c_out,m] with
  /// m = floor((l + 2*padding - k)/stride) + 1; cross-correlation, zero pad.
  Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride = 1,
                int padding = 0);
  /// Non-overlapping windows (stride = size); trailing remainder dropped.
  Tensor pool1d(const Tensor& x, PoolKind kind, int size);
  /// Concatenate [b,c_i,l] tensors along the channel axis.
  Tensor concat_channels(const std::vector<Tensor>& xs);

  /// Same data and tape node, new shape (numel preserved).
  Tensor reshape(const Tensor& x, Shape shape) const;
  /// [b, ...] -> [b, rest].
  Tensor flatten(const Tensor& x) const;

  Tensor sum_all(const Tensor& x);
  Tensor mean_all(const Tensor& x);

  // Scalar losses, mean-reduced over the batch. p holds probabilities; y
  // holds 0/1 targets, one per element of p. BCE/Focal clamp p to
  // [1e-7, 1-1e-7] before taking logs (gradient zero outside the clamp).
  Tensor bce_loss(const Tensor& p, const std::vector<float>& y);
  Tensor mse_loss(const Tensor& p, const std::vector<float>& y);
  Tensor focal_loss(const Tensor& p, const std::vector<float>& y, float alpha, float gamma);

  /// Reverse sweep from a scalar tracked loss; gradients accumulate
  /// additively across fan-out. Returns the number of nodes visited
  /// (all nodes reachable from the loss, leaves included).
  size_t backward(const Tensor& loss);

  /// Gradient from the last backward() wrt a tracked tensor; zeros if the
  /// tensor was not reached.
  const std::vector<float>& grad(const Tensor& t);

  size_t size() const { return nodes_.size(); }

 private:
  using BackFn = std::function<void(Tape&, const std::vector<float>&)>;

  struct Node {
    std::vector<int> parents;
    int64_t size = 0;
    BackFn back;  // null for leaves
  };

  int push(std::vector<int> parents, int64_t size, BackFn back);
  std::vector<float>& gbuf(int id);
  Tensor unary_ew(const Tensor& x, std::vector<float> out_vals, std::vector<float> dydx);
  Tensor loss_impl(const Tensor& p, const std::vector<float>& y, std::vector<double> per_elem,
                   std::vector<double> dldp);

  std::vector<Node> nodes_;
  std::vector<std::vector<float>> grads_;
};

}  // namespace tscx
