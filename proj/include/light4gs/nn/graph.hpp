#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <string>
#include <vector>

#include "light4gs/nn/tensor.hpp"

namespace l4gs::nn {

/// A trainable tensor with its gradient accumulator and momentum buffer.
/// `grad` and `velocity` always have the shape of `value`.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor velocity;

  Parameter() = default;
  Parameter(std::string n, Tensor v);

  void zero_grad() { grad.fill(0.0); }
  /// Replace the value (and reset buffers) when the shape changes, e.g. after pruning.
  void reset(Tensor v);
};

/// Weights and bias of one layer. Convolutions use weight [out,in,k,k] and
/// fully connected layers weight [out,in]; bias is [out] in both cases.
struct LayerParams {
  Parameter weight;
  Parameter bias;

  LayerParams() = default;
  LayerParams(const std::string& name, Tensor w, Tensor b);

  std::size_t out_channels() const { return weight.value.dim(0); }
  std::size_t in_channels() const { return weight.value.dim(1); }
};

struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

/// Records a forward computation as a tape of nodes; backward() replays the
/// tape in reverse and accumulates gradients into leaves and Parameters.
/// A graph can be backpropagated once.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  Var constant(Tensor value);
  /// A differentiable input whose gradient is read back with grad().
  Var leaf(Tensor value);
  /// Reads `p.value`; on backward the node gradient is added into `p.grad`.
  Var param(Parameter& p);

  /// Adds an op node. `fn` is invoked during backward only when some parent
  /// requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn fn);

  const Tensor& value(Var v) const { return node(v).value; }
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Adds `g` into the gradient buffer of `v` (no-op for constants).
  void accumulate(Var v, const Tensor& g);
  /// Mutable gradient buffer of `v`, allocated on first use. Only valid when
  /// requires_grad(v).
  Tensor& grad_buffer(Var v);

  /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be a one-element tensor.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::deque<Node> nodes_;
  bool consumed_ = false;
};

// ---- Pure kernels ---------------------------------------------------------

/// Cross-correlation with zero padding k/2; output is ceil(H/stride) x ceil(W/stride).
/// Where `mask` ([k,k], 0/1) is given, masked-out taps contribute nothing.
Tensor conv2d(const Tensor& input, const LayerParams& params, int stride, const Tensor* mask = nullptr);

/// Fully connected map of each row of x [N,in] to [N,out].
Tensor linear(const Tensor& x, const LayerParams& params);

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
/// Inverse of softplus for y > 0.
double softplus_inverse(double y);

// ---- Graph ops ------------------------------------------------------------

Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double s);
Var mul_const(Graph& g, Var a, const Tensor& c);
Var add_const(Graph& g, Var a, const Tensor& c);
/// a + s where s is a one-element node broadcast over a.
Var add_scalar(Graph& g, Var a, Var s);
/// s * u for a one-element node s and a constant tensor u.
Var scalar_times(Graph& g, Var s, const Tensor& u);
Var relu(Graph& g, Var a);
Var softplus(Graph& g, Var a);
Var sum(Graph& g, Var a);
Var mean(Graph& g, Var a);
/// Mean squared error against a constant target.
Var mse(Graph& g, Var a, const Tensor& target);

Var linear(Graph& g, Var x, LayerParams& params);
Var conv2d(Graph& g, Var x, LayerParams& params, int stride, const Tensor* mask = nullptr);
Var resize_bilinear(Graph& g, Var x, std::size_t out_h, std::size_t out_w);

Var concat_channels(Graph& g, Var a, Var b);
Var slice_channels(Graph& g, Var a, std::size_t begin, std::size_t end);
/// Zero-pads a [C,H,W] node at the bottom/right to [C,out_h,out_w].
Var pad(Graph& g, Var x, std::size_t out_h, std::size_t out_w);
Var crop(Graph& g, Var x, std::size_t out_h, std::size_t out_w);
/// Concatenates [N,a_i] row batches along columns.
Var concat_cols(Graph& g, const std::vector<Var>& parts);
Var slice_cols(Graph& g, Var x, std::size_t begin, std::size_t end);

}  // namespace l4gs::nn

namespace l4gs::nn {

/// Divides every row of x [N,d] by its Euclidean norm.
Var normalize_rows(Graph& g, Var x);
/// max(x, floor) elementwise; the gradient is zero where the floor binds.
Var clamp_min(Graph& g, Var x, double floor);

}  // namespace l4gs::nn
