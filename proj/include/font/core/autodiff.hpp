#pragma once

// Reverse-mode automatic differentiation over core::Tensor, 64-bit throughout.
// The graph is a tape of shared nodes created per forward pass; backward()
// walks reachable nodes in descending creation order, so gradient
// accumulation order is deterministic. Heavy ops call into font::kernels and
// are therefore bitwise identical in serial and parallel execution modes.

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "font/core/tensor.hpp"

namespace font::ad {

using core::Shape;
using core::Tensor;

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;  // null for leaves

  void ensure_grad();
};

using NodePtr = std::shared_ptr<Node>;

// Value-semantics handle onto a graph node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& val() const { return node_->value; }
  Tensor& grad();
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  NodePtr node() const { return node_; }

  static Var from_node(NodePtr n);

 private:
  NodePtr node_;
};

// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every reachable
// node with requires_grad. loss must be scalar (numel 1).
void backward(const Var& loss);

// Leaf copy of x's value, cut off from the graph.
Var detach(const Var& x);

// ---- elementwise arithmetic (same shape, or either side scalar [1]) ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var neg(const Var& a);

// ---- activations / pointwise ----
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var sigmoid(const Var& x);
Var tanh_op(const Var& x);
Var exp_op(const Var& x);
Var log_op(const Var& x);
Var sqrt_op(const Var& x);
Var log_sigmoid(const Var& x);  // numerically stable log(sigmoid(x))
Var clamp_min(const Var& x, double lo);

// ---- reductions (return shape {1}) ----
Var sum(const Var& x);
Var mean(const Var& x);
Var mean_axis_last(const Var& x);  // [a, b] -> [a], row means
Var l1_mean(const Var& a, const Var& b);  // mean |a - b|, sign subgradient

// ---- shape ----
Var reshape(const Var& x, Shape shape);
Var slice0(const Var& x, int start, int len);  // slice along leading axis
Var concat0(const std::vector<Var>& xs);       // concat along leading axis
Var transpose2d(const Var& x);                 // [m,n] -> [n,m]
Var hwc_to_chw(const Var& x);                  // [h,w,c] -> [c,h,w]
Var chw_to_hwc(const Var& x);                  // [c,h,w] -> [h,w,c]
Var sub_first_row(const Var& x);               // [t,d]: row k minus row 0

// ---- dense / conv layers ----
// x [in] or [B,in]; w [out,in]; b [out] -> [out] or [B,out]
Var linear(const Var& x, const Var& w, const Var& b);
// x [cin,h,w]; w [cout,cin,kh,kw]; b [cout]
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// x [cin,t]; w [cout,cin,k]; b [cout]
Var conv1d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var avg_pool2(const Var& x);                          // [c,h,w] -> [c,h/2,w/2]
Var resize_bilinear(const Var& x, int hout, int wout);  // [c,h,w]

// ---- warping / motion ----
// feat [c,h,w], grid [gh,gw,2] normalized coords -> [c,gh,gw]
Var grid_sample(const Var& feat, const Var& grid);
// kp [n,2] -> [n,h,w] gaussians at sigma (normalized units)
Var gaussian_heatmap(const Var& kp, int h, int w, double sigma);
// ksrc/kdri [n,2], jsrc/jdri [n,2,2] -> [(n+1),h,w,2]; field 0 = identity
Var sparse_motion(const Var& ksrc, const Var& jsrc, const Var& kdri, const Var& jdri, int h,
                  int w);
// mask [k,h,w] (softmax weights), fields [k,h,w,2] -> [h,w,2]
Var flow_combine(const Var& mask, const Var& fields);
Var softmax0(const Var& x);                 // softmax over axis 0 of [k,h,w]
Var mul_bcast0(const Var& f, const Var& m);  // [c,h,w] * [1,h,w]

}  // namespace font::ad
