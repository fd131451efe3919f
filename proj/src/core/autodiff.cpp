#include "font/core/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "font/core/errors.hpp"
#include "font/kernels/kernels.hpp"

namespace font::ad {

using font::EmptyInputError;
using font::ShapeError;
using font::SingularityError;

namespace {

std::atomic<std::uint64_t> g_next_id{1};

NodePtr new_node(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

bool any_requires(const std::vector<NodePtr>& inputs) {
  for (const auto& n : inputs)
    if (n->requires_grad) return true;
  return false;
}

void accum(Node& target, const double* g, std::size_t n) {
  if (!target.requires_grad) return;
  target.ensure_grad();
  double* t = target.grad.data();
  for (std::size_t i = 0; i < n; ++i) t[i] += g[i];
}

}  // namespace

void Node::ensure_grad() {
  if (grad.numel() != value.numel()) grad = Tensor::zeros(value.shape());
}

Var::Var(Tensor value, bool requires_grad) : node_(new_node(std::move(value), requires_grad)) {}

Tensor& Var::grad() {
  node_->ensure_grad();
  return node_->grad;
}

Var Var::from_node(NodePtr n) {
  Var v;
  v.node_ = std::move(n);
  return v;
}

Var make_op(Tensor value, std::vector<NodePtr> inputs, std::function<void(Node&)> backprop) {
  const bool req = any_requires(inputs);
  NodePtr n = new_node(std::move(value), req);
  if (req) {
    n->inputs = std::move(inputs);
    n->backprop = std::move(backprop);
  }
  return Var::from_node(std::move(n));
}

void backward(const Var& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ShapeError("backward expects a defined scalar loss");
  // collect reachable grad-requiring nodes
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{loss.node().get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!n->requires_grad || !seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& in : n->inputs) stack.push_back(in.get());
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id > b->id; });

  Node* root = loss.node().get();
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (Node* n : order)
    if (n->backprop && n->grad.numel() == n->value.numel()) n->backprop(*n);
}

Var detach(const Var& x) { return Var(x.val(), false); }

// ---------------------------------------------------------------- arithmetic

namespace {

enum class BinKind { add, sub, mul, divide };

// Same-shape or scalar-broadcast binary op. Scalar side receives the summed
// gradient.
Var binary_op(const Var& a, const Var& b, BinKind kind) {
  const bool a_scalar = a.numel() == 1, b_scalar = b.numel() == 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape())
    throw ShapeError("binary op shape mismatch: " + core::shape_str(a.shape()) + " vs " +
                     core::shape_str(b.shape()));
  const Shape out_shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = core::shape_numel(out_shape);
  Tensor out(out_shape);
  const double* pa = a.val().data();
  const double* pb = b.val().data();
  double* po = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = pa[a_scalar ? 0 : i], y = pb[b_scalar ? 0 : i];
    switch (kind) {
      case BinKind::add: po[i] = x + y; break;
      case BinKind::sub: po[i] = x - y; break;
      case BinKind::mul: po[i] = x * y; break;
      case BinKind::divide: po[i] = x / y; break;
    }
  }
  auto an = a.node(), bn = b.node();
  return make_op(std::move(out), {an, bn}, [an, bn, kind, a_scalar, b_scalar, n](Node& self) {
    const double* g = self.grad.data();
    const double* pa = an->value.data();
    const double* pb = bn->value.data();
    if (an->requires_grad) {
      an->ensure_grad();
      double* ga = an->grad.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double y = pb[b_scalar ? 0 : i];
        double d = 0.0;
        switch (kind) {
          case BinKind::add:
          case BinKind::sub: d = g[i]; break;
          case BinKind::mul: d = g[i] * y; break;
          case BinKind::divide: d = g[i] / y; break;
        }
        ga[a_scalar ? 0 : i] += d;
      }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      double* gb = bn->grad.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double x = pa[a_scalar ? 0 : i], y = pb[b_scalar ? 0 : i];
        double d = 0.0;
        switch (kind) {
          case BinKind::add: d = g[i]; break;
          case BinKind::sub: d = -g[i]; break;
          case BinKind::mul: d = g[i] * x; break;
          case BinKind::divide: d = -g[i] * x / (y * y); break;
        }
        gb[b_scalar ? 0 : i] += d;
      }
    }
  });
}

// Pointwise op defined by value and derivative-from-output-and-input.
template <typename FwdFn, typename DerivFn>
Var pointwise(const Var& x, FwdFn fwd, DerivFn deriv) {
  const std::size_t n = x.numel();
  Tensor out(x.shape());
  const double* px = x.val().data();
  double* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = fwd(px[i]);
  auto xn = x.node();
  Tensor saved = out;  // many derivatives are cheapest from the output
  return make_op(std::move(out), {xn}, [xn, saved, deriv, n](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = self.grad.data();
    const double* px = xn->value.data();
    const double* py = saved.data();
    double* gx = xn->grad.data();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * deriv(px[i], py[i]);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) { return binary_op(a, b, BinKind::add); }
Var sub(const Var& a, const Var& b) { return binary_op(a, b, BinKind::sub); }
Var mul(const Var& a, const Var& b) { return binary_op(a, b, BinKind::mul); }
Var div(const Var& a, const Var& b) { return binary_op(a, b, BinKind::divide); }

Var add_scalar(const Var& a, double s) {
  return pointwise(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar(const Var& a, double s) {
  return pointwise(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var relu(const Var& x) {
  return pointwise(x, [](double v) { return v > 0.0 ? v : 0.0; },
                   [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, double slope) {
  return pointwise(x, [slope](double v) { return v > 0.0 ? v : slope * v; },
                   [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var sigmoid(const Var& x) {
  return pointwise(x,
                   [](double v) {
                     return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                     : std::exp(v) / (1.0 + std::exp(v));
                   },
                   [](double, double y) { return y * (1.0 - y); });
}

Var tanh_op(const Var& x) {
  return pointwise(x, [](double v) { return std::tanh(v); },
                   [](double, double y) { return 1.0 - y * y; });
}

Var exp_op(const Var& x) {
  return pointwise(x, [](double v) { return std::exp(v); },
                   [](double, double y) { return y; });
}

Var log_op(const Var& x) {
  return pointwise(x, [](double v) { return std::log(v); },
                   [](double v, double) { return 1.0 / v; });
}

Var sqrt_op(const Var& x) {
  return pointwise(x, [](double v) { return std::sqrt(v); },
                   [](double, double y) { return 0.5 / y; });
}

Var log_sigmoid(const Var& x) {
  // log sigmoid(v) = -softplus(-v), stable for both signs
  return pointwise(x,
                   [](double v) {
                     return v >= 0.0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
                   },
                   [](double v, double) {
                     // 1 - sigmoid(v)
                     return v >= 0.0 ? std::exp(-v) / (1.0 + std::exp(-v))
                                     : 1.0 / (1.0 + std::exp(v));
                   });
}

Var clamp_min(const Var& x, double lo) {
  return pointwise(x, [lo](double v) { return v > lo ? v : lo; },
                   [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------- reductions

Var sum(const Var& x) {
  const std::size_t n = x.numel();
  double acc = 0.0;
  const double* px = x.val().data();
  for (std::size_t i = 0; i < n; ++i) acc += px[i];
  auto xn = x.node();
  return make_op(Tensor::from_data({1}, {acc}), {xn}, [xn, n](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double g = self.grad[0];
    double* gx = xn->grad.data();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

Var mean(const Var& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

Var mean_axis_last(const Var& x) {
  if (x.shape().size() != 2) throw ShapeError("mean_axis_last expects rank 2");
  const int m = x.shape()[0], n = x.shape()[1];
  Tensor out({m});
  const double* px = x.val().data();
  double* po = out.data();
  for (int i = 0; i < m; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += px[static_cast<std::size_t>(i) * n + j];
    po[i] = acc / static_cast<double>(n);
  }
  auto xn = x.node();
  return make_op(std::move(out), {xn}, [xn, m, n](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = self.grad.data();
    double* gx = xn->grad.data();
    const double inv = 1.0 / static_cast<double>(n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) gx[static_cast<std::size_t>(i) * n + j] += g[i] * inv;
  });
}

Var l1_mean(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) throw ShapeError("l1_mean shape mismatch");
  const std::size_t n = a.numel();
  const double* pa = a.val().data();
  const double* pb = b.val().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::fabs(pa[i] - pb[i]);
  acc /= static_cast<double>(n);
  auto an = a.node(), bn = b.node();
  return make_op(Tensor::from_data({1}, {acc}), {an, bn}, [an, bn, n](Node& self) {
    const double g = self.grad[0] / static_cast<double>(n);
    const double* pa = an->value.data();
    const double* pb = bn->value.data();
    if (an->requires_grad) {
      an->ensure_grad();
      double* ga = an->grad.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double d = pa[i] - pb[i];
        ga[i] += g * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
      }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      double* gb = bn->grad.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double d = pa[i] - pb[i];
        gb[i] -= g * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
      }
    }
  });
}

// --------------------------------------------------------------------- shape

Var reshape(const Var& x, Shape shape) {
  if (core::shape_numel(shape) != x.numel()) throw ShapeError("reshape element count mismatch");
  Tensor out = x.val().reshaped(std::move(shape));
  auto xn = x.node();
  const std::size_t n = x.numel();
  return make_op(std::move(out), {xn}, [xn, n](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    accum(*xn, self.grad.data(), n);
  });
}

Var slice0(const Var& x, int start, int len) {
  if (x.shape().empty()) throw ShapeError("slice0 on scalar");
  const int dim0 = x.shape()[0];
  if (start < 0 || len <= 0 || start + len > dim0) throw ShapeError("slice0 out of range");
  const std::size_t inner = x.numel() / static_cast<std::size_t>(dim0);
  Shape out_shape = x.shape();
  out_shape[0] = len;
  Tensor out(out_shape);
  std::memcpy(out.data(), x.val().data() + static_cast<std::size_t>(start) * inner,
              sizeof(double) * static_cast<std::size_t>(len) * inner);
  auto xn = x.node();
  return make_op(std::move(out), {xn}, [xn, start, len, inner](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = self.grad.data();
    double* gx = xn->grad.data() + static_cast<std::size_t>(start) * inner;
    const std::size_t n = static_cast<std::size_t>(len) * inner;
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
  });
}

Var concat0(const std::vector<Var>& xs) {
  if (xs.empty()) throw EmptyInputError("concat0 of zero tensors");
  Shape rest = xs[0].shape();
  int dim0 = 0;
  for (const Var& x : xs) {
    Shape s = x.shape();
    if (s.size() != rest.size()) throw ShapeError("concat0 rank mismatch");
    for (std::size_t i = 1; i < s.size(); ++i)
      if (s[i] != rest[i]) throw ShapeError("concat0 trailing shape mismatch");
    dim0 += s[0];
  }
  Shape out_shape = rest;
  out_shape[0] = dim0;
  Tensor out(out_shape);
  std::vector<NodePtr> inputs;
  std::size_t off = 0;
  for (const Var& x : xs) {
    std::memcpy(out.data() + off, x.val().data(), sizeof(double) * x.numel());
    off += x.numel();
    inputs.push_back(x.node());
  }
  return make_op(std::move(out), inputs, [inputs](Node& self) {
    const double* g = self.grad.data();
    std::size_t off = 0;
    for (const auto& in : inputs) {
      const std::size_t n = in->value.numel();
      if (in->requires_grad) {
        in->ensure_grad();
        double* gx = in->grad.data();
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[off + i];
      }
      off += n;
    }
  });
}

Var transpose2d(const Var& x) {
  if (x.shape().size() != 2) throw ShapeError("transpose2d expects rank 2");
  const int m = x.shape()[0], n = x.shape()[1];
  Tensor out({n, m});
  const double* px = x.val().data();
  double* po = out.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) po[static_cast<std::size_t>(j) * m + i] = px[static_cast<std::size_t>(i) * n + j];
  auto xn = x.node();
  return make_op(std::move(out), {xn}, [xn, m, n](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = self.grad.data();
    double* gx = xn->grad.data();
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i) gx[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
  });
}

Var hwc_to_chw(const Var& x) {
  if (x.shape().size() != 3) throw ShapeError("hwc_to_chw expects rank 3");
  const int h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
  Tensor out({c, h, w});
  const double* px = x.val().data();
  double* po = out.data();
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int k = 0; k < c; ++k)
        po[(static_cast<std::size_t>(k) * h + i) * w + j] =
            px[(static_cast<std::size_t>(i) * w + j) * c + k];
  auto xn = x.node();
  return make_op(std::move(out), {xn}, [xn, h, w, c](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = self.grad.data();
    double* gx = xn->grad.data();
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int k = 0; k < c; ++k)
          gx[(static_cast<std::size_t>(i) * w + j) * c + k] +=
              g[(static_cast<std::size_t>(k) * h + i) * w + j];
  });
}

Var chw_to_hwc(const Var& x) {
  if (x.shape().size() != 3) throw ShapeError("chw_to_hwc expects rank 3");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  Tensor out({h, w, c});
  const double* px = x.val().data();
  double* po = out.data();
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        po[(static_cast<std::size_t>(i) * w + j) * c + k] =
            px[(static_cast<std::size_t>(k) * h + i) * w + j];
  auto xn = x.node();
  return make_op(std::move(out), {xn}, [xn, c, h, w](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = self.grad.data();
    double* gx = xn->grad.data();
    for (int k = 0; k < c; ++k)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          gx[(static_cast<std::size_t>(k) * h + i) * w + j] +=
              g[(static_cast<std::size_t>(i) * w + j) * c + k];
  });
}

Var sub_first_row(const Var& x) {
  if (x.shape().size() != 2) throw ShapeError("sub_first_row expects rank 2");
  const int t = x.shape()[0], d = x.shape()[1];
  Tensor out(x.shape());
  const double* px = x.val().data();
  double* po = out.data();
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j)
      po[static_cast<std::size_t>(i) * d + j] = px[static_cast<std::size_t>(i) * d + j] - px[j];
  auto xn = x.node();
  return make_op(std::move(out), {xn}, [xn, t, d](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = self.grad.data();
    double* gx = xn->grad.data();
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < d; ++j) {
        const double gi = g[static_cast<std::size_t>(i) * d + j];
        gx[static_cast<std::size_t>(i) * d + j] += gi;
        gx[j] -= gi;
      }
  });
}

// -------------------------------------------------------------- dense / conv

Var linear(const Var& x, const Var& w, const Var& b) {
  if (w.shape().size() != 2) throw ShapeError("linear weight must be [out,in]");
  const int out_dim = w.shape()[0], in_dim = w.shape()[1];
  const bool batched = x.shape().size() == 2;
  const int batch = batched ? x.shape()[0] : 1;
  const int xin = batched ? x.shape()[1] : x.shape()[0];
  if (xin != in_dim) throw ShapeError("linear input dim mismatch");
  if (b.shape() != Shape{out_dim}) throw ShapeError("linear bias dim mismatch");

  Tensor out(batched ? Shape{batch, out_dim} : Shape{out_dim});
  kernels::matmul_nt(x.val().data(), w.val().data(), out.data(), batch, in_dim, out_dim);
  {
    double* po = out.data();
    const double* pb = b.val().data();
    for (int i = 0; i < batch; ++i)
      for (int j = 0; j < out_dim; ++j) po[static_cast<std::size_t>(i) * out_dim + j] += pb[j];
  }
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return make_op(std::move(out), {xn, wn, bn}, [xn, wn, bn, batch, in_dim, out_dim](Node& self) {
    const double* g = self.grad.data();
    if (xn->requires_grad) {
      xn->ensure_grad();
      Tensor gx({batch, in_dim});
      kernels::matmul(g, wn->value.data(), gx.data(), batch, out_dim, in_dim);
      accum(*xn, gx.data(), gx.numel());
    }
    if (wn->requires_grad) {
      wn->ensure_grad();
      Tensor gw({out_dim, in_dim});
      kernels::matmul_tn(g, xn->value.data(), gw.data(), out_dim, batch, in_dim);
      accum(*wn, gw.data(), gw.numel());
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      double* gb = bn->grad.data();
      for (int i = 0; i < batch; ++i)
        for (int j = 0; j < out_dim; ++j) gb[j] += g[static_cast<std::size_t>(i) * out_dim + j];
    }
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  if (x.shape().size() != 3 || w.shape().size() != 4) throw ShapeError("conv2d rank mismatch");
  kernels::Conv2dShape s{x.shape()[0], x.shape()[1], x.shape()[2],
                         w.shape()[0], w.shape()[2], w.shape()[3], stride, pad};
  if (w.shape()[1] != s.cin) throw ShapeError("conv2d channel mismatch");
  if (b.shape() != Shape{s.cout}) throw ShapeError("conv2d bias mismatch");
  Tensor out({s.cout, s.hout(), s.wout()});
  kernels::conv2d_forward(x.val().data(), w.val().data(), b.val().data(), out.data(), s);
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return make_op(std::move(out), {xn, wn, bn}, [xn, wn, bn, s](Node& self) {
    const double* g = self.grad.data();
    if (xn->requires_grad) {
      xn->ensure_grad();
      Tensor gx(xn->value.shape());
      kernels::conv2d_backward_input(g, wn->value.data(), gx.data(), s);
      accum(*xn, gx.data(), gx.numel());
    }
    if (wn->requires_grad || bn->requires_grad) {
      Tensor gw(wn->value.shape());
      Tensor gb({s.cout});
      kernels::conv2d_backward_weights(g, xn->value.data(), gw.data(), gb.data(), s);
      if (wn->requires_grad) {
        wn->ensure_grad();
        accum(*wn, gw.data(), gw.numel());
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        accum(*bn, gb.data(), gb.numel());
      }
    }
  });
}

Var conv1d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  if (x.shape().size() != 2 || w.shape().size() != 3) throw ShapeError("conv1d rank mismatch");
  kernels::Conv1dShape s{x.shape()[0], x.shape()[1], w.shape()[0], w.shape()[2], stride, pad};
  if (w.shape()[1] != s.cin) throw ShapeError("conv1d channel mismatch");
  if (b.shape() != Shape{s.cout}) throw ShapeError("conv1d bias mismatch");
  Tensor out({s.cout, s.tout()});
  kernels::conv1d_forward(x.val().data(), w.val().data(), b.val().data(), out.data(), s);
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return make_op(std::move(out), {xn, wn, bn}, [xn, wn, bn, s](Node& self) {
    const double* g = self.grad.data();
    if (xn->requires_grad) {
      xn->ensure_grad();
      Tensor gx(xn->value.shape());
      kernels::conv1d_backward_input(g, wn->value.data(), gx.data(), s);
      accum(*xn, gx.data(), gx.numel());
    }
    if (wn->requires_grad || bn->requires_grad) {
      Tensor gw(wn->value.shape());
      Tensor gb({s.cout});
      kernels::conv1d_backward_weights(g, xn->value.data(), gw.data(), gb.data(), s);
      if (wn->requires_grad) {
        wn->ensure_grad();
        accum(*wn, gw.data(), gw.numel());
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        accum(*bn, gb.data(), gb.numel());
      }
    }
  });
}

Var avg_pool2(const Var& x) {
  if (x.shape().size() != 3) throw ShapeError("avg_pool2 expects [c,h,w]");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  Tensor out({c, h / 2, w / 2});
  kernels::avg_pool2_forward(x.val().data(), out.data(), c, h, w);
  auto xn = x.node();
  return make_op(std::move(out), {xn}, [xn, c, h, w](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    Tensor gx({c, h, w});
    kernels::avg_pool2_backward(self.grad.data(), gx.data(), c, h, w);
    accum(*xn, gx.data(), gx.numel());
  });
}

Var resize_bilinear(const Var& x, int hout, int wout) {
  if (x.shape().size() != 3) throw ShapeError("resize_bilinear expects [c,h,w]");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  Tensor out({c, hout, wout});
  kernels::resize_bilinear_forward(x.val().data(), out.data(), c, h, w, hout, wout);
  auto xn = x.node();
  return make_op(std::move(out), {xn}, [xn, c, h, w, hout, wout](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    Tensor gx({c, h, w});
    kernels::resize_bilinear_backward(self.grad.data(), gx.data(), c, h, w, hout, wout);
    accum(*xn, gx.data(), gx.numel());
  });
}

// ---------------------------------------------------------- warping / motion

Var grid_sample(const Var& feat, const Var& grid) {
  if (feat.shape().size() != 3 || grid.shape().size() != 3 || grid.shape()[2] != 2)
    throw ShapeError("grid_sample expects feat [c,h,w], grid [gh,gw,2]");
  const int c = feat.shape()[0], h = feat.shape()[1], w = feat.shape()[2];
  const int gh = grid.shape()[0], gw = grid.shape()[1];
  Tensor out({c, gh, gw});
  kernels::grid_sample_forward(feat.val().data(), grid.val().data(), out.data(), c, h, w, gh, gw);
  auto fn = feat.node(), gn = grid.node();
  return make_op(std::move(out), {fn, gn}, [fn, gn, c, h, w, gh, gw](Node& self) {
    Tensor gf, gg;
    double* gfp = nullptr;
    double* ggp = nullptr;
    if (fn->requires_grad) {
      gf = Tensor({c, h, w});
      gfp = gf.data();
    }
    if (gn->requires_grad) {
      gg = Tensor({gh, gw, 2});
      ggp = gg.data();
    }
    kernels::grid_sample_backward(self.grad.data(), fn->value.data(), gn->value.data(), gfp, ggp,
                                  c, h, w, gh, gw);
    if (gfp) {
      fn->ensure_grad();
      accum(*fn, gfp, gf.numel());
    }
    if (ggp) {
      gn->ensure_grad();
      accum(*gn, ggp, gg.numel());
    }
  });
}

Var gaussian_heatmap(const Var& kp, int h, int w, double sigma) {
  if (kp.shape().size() != 2 || kp.shape()[1] != 2) throw ShapeError("gaussian_heatmap expects [n,2]");
  const int n = kp.shape()[0];
  Tensor out({n, h, w});
  kernels::gaussian_heatmap_forward(kp.val().data(), out.data(), n, h, w, sigma);
  auto kn = kp.node();
  return make_op(std::move(out), {kn}, [kn, n, h, w, sigma](Node& self) {
    if (!kn->requires_grad) return;
    kn->ensure_grad();
    Tensor gk({n, 2});
    kernels::gaussian_heatmap_backward(self.grad.data(), kn->value.data(), gk.data(), n, h, w,
                                       sigma);
    accum(*kn, gk.data(), gk.numel());
  });
}

namespace {

// 2x2 inverse with the documented regularization: J + 1e-4 I is substituted
// when |det J| < 1e-6; a singularity error names the offending keypoint if
// the regularized matrix is still near-singular.
void invert_2x2_regularized(const double* j, double* r, int k) {
  double a = j[0], b = j[1], c = j[2], d = j[3];
  double det = a * d - b * c;
  if (std::fabs(det) < 1e-6) {
    a += 1e-4;
    d += 1e-4;
    det = a * d - b * c;
    if (std::fabs(det) < 1e-6)
      throw SingularityError("driving jacobian " + std::to_string(k) +
                             " is singular after regularization");
  }
  const double inv = 1.0 / det;
  r[0] = d * inv;
  r[1] = -b * inv;
  r[2] = -c * inv;
  r[3] = a * inv;
}

}  // namespace

Var sparse_motion(const Var& ksrc, const Var& jsrc, const Var& kdri, const Var& jdri, int h,
                  int w) {
  if (ksrc.shape().size() != 2 || ksrc.shape()[1] != 2) throw ShapeError("ksrc must be [n,2]");
  const int n = ksrc.shape()[0];
  if (kdri.shape() != ksrc.shape()) throw ShapeError("kdri/ksrc shape mismatch");
  if (jsrc.shape() != Shape{n, 2, 2} || jdri.shape() != Shape{n, 2, 2})
    throw ShapeError("jacobians must be [n,2,2]");

  // A_k = J_src^k (J_dri^k)^-1, computed serially in doubles
  Tensor amat({n, 4});
  Tensor rmat({n, 4});
  for (int k = 0; k < n; ++k) {
    const double* js = jsrc.val().data() + 4 * k;
    double* r = rmat.data() + 4 * k;
    invert_2x2_regularized(jdri.val().data() + 4 * k, r, k);
    double* a = amat.data() + 4 * k;
    a[0] = js[0] * r[0] + js[1] * r[2];
    a[1] = js[0] * r[1] + js[1] * r[3];
    a[2] = js[2] * r[0] + js[3] * r[2];
    a[3] = js[2] * r[1] + js[3] * r[3];
  }
  Tensor out({n + 1, h, w, 2});
  kernels::sparse_motion_forward(ksrc.val().data(), amat.data(), kdri.val().data(), out.data(), n,
                                 h, w);
  auto ksn = ksrc.node(), jsn = jsrc.node(), kdn = kdri.node(), jdn = jdri.node();
  return make_op(std::move(out), {ksn, jsn, kdn, jdn},
                 [ksn, jsn, kdn, jdn, amat, rmat, n, h, w](Node& self) {
    Tensor gksrc({n, 2}), gamat({n, 4}), gkdri({n, 2});
    kernels::sparse_motion_backward(self.grad.data(), amat.data(), kdn->value.data(),
                                    gksrc.data(), gamat.data(), gkdri.data(), n, h, w);
    if (ksn->requires_grad) {
      ksn->ensure_grad();
      accum(*ksn, gksrc.data(), gksrc.numel());
    }
    if (kdn->requires_grad) {
      kdn->ensure_grad();
      accum(*kdn, gkdri.data(), gkdri.numel());
    }
    if (jsn->requires_grad) {
      jsn->ensure_grad();
      double* gj = jsn->grad.data();
      for (int k = 0; k < n; ++k) {
        const double* ga = gamat.data() + 4 * k;
        const double* r = rmat.data() + 4 * k;
        // A = Jsrc R  =>  gJsrc = gA R^T
        gj[4 * k + 0] += ga[0] * r[0] + ga[1] * r[1];
        gj[4 * k + 1] += ga[0] * r[2] + ga[1] * r[3];
        gj[4 * k + 2] += ga[2] * r[0] + ga[3] * r[1];
        gj[4 * k + 3] += ga[2] * r[2] + ga[3] * r[3];
      }
    }
    if (jdn->requires_grad) {
      jdn->ensure_grad();
      double* gj = jdn->grad.data();
      for (int k = 0; k < n; ++k) {
        const double* ga = gamat.data() + 4 * k;
        const double* r = rmat.data() + 4 * k;
        const double* js = jsn->value.data() + 4 * k;
        // gR = Jsrc^T gA
        const double gr0 = js[0] * ga[0] + js[2] * ga[2];
        const double gr1 = js[0] * ga[1] + js[2] * ga[3];
        const double gr2 = js[1] * ga[0] + js[3] * ga[2];
        const double gr3 = js[1] * ga[1] + js[3] * ga[3];
        // R = Jd^-1  =>  gJd = -R^T gR R^T
        const double m0 = r[0] * gr0 + r[2] * gr2;  // R^T gR
        const double m1 = r[0] * gr1 + r[2] * gr3;
        const double m2 = r[1] * gr0 + r[3] * gr2;
        const double m3 = r[1] * gr1 + r[3] * gr3;
        gj[4 * k + 0] -= m0 * r[0] + m1 * r[1];  // (R^T gR) R^T
        gj[4 * k + 1] -= m0 * r[2] + m1 * r[3];
        gj[4 * k + 2] -= m2 * r[0] + m3 * r[1];
        gj[4 * k + 3] -= m2 * r[2] + m3 * r[3];
      }
    }
  });
}

Var flow_combine(const Var& mask, const Var& fields) {
  if (mask.shape().size() != 3 || fields.shape().size() != 4 || fields.shape()[3] != 2)
    throw ShapeError("flow_combine expects mask [k,h,w], fields [k,h,w,2]");
  const int k = mask.shape()[0], h = mask.shape()[1], w = mask.shape()[2];
  if (fields.shape()[0] != k || fields.shape()[1] != h || fields.shape()[2] != w)
    throw ShapeError("flow_combine mask/fields mismatch");
  Tensor out({h, w, 2});
  const double* pm = mask.val().data();
  const double* pf = fields.val().data();
  double* po = out.data();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < plane; ++p) {
    double fx = 0.0, fy = 0.0;
    for (int f = 0; f < k; ++f) {
      const double m = pm[static_cast<std::size_t>(f) * plane + p];
      fx += m * pf[(static_cast<std::size_t>(f) * plane + p) * 2];
      fy += m * pf[(static_cast<std::size_t>(f) * plane + p) * 2 + 1];
    }
    po[p * 2] = fx;
    po[p * 2 + 1] = fy;
  }
  auto mn = mask.node(), fn = fields.node();
  return make_op(std::move(out), {mn, fn}, [mn, fn, k, plane](Node& self) {
    const double* g = self.grad.data();
    const double* pm = mn->value.data();
    const double* pf = fn->value.data();
    if (mn->requires_grad) {
      mn->ensure_grad();
      double* gm = mn->grad.data();
      for (int f = 0; f < k; ++f)
        for (std::size_t p = 0; p < plane; ++p)
          gm[static_cast<std::size_t>(f) * plane + p] +=
              g[p * 2] * pf[(static_cast<std::size_t>(f) * plane + p) * 2] +
              g[p * 2 + 1] * pf[(static_cast<std::size_t>(f) * plane + p) * 2 + 1];
    }
    if (fn->requires_grad) {
      fn->ensure_grad();
      double* gf = fn->grad.data();
      for (int f = 0; f < k; ++f)
        for (std::size_t p = 0; p < plane; ++p) {
          const double m = pm[static_cast<std::size_t>(f) * plane + p];
          gf[(static_cast<std::size_t>(f) * plane + p) * 2] += m * g[p * 2];
          gf[(static_cast<std::size_t>(f) * plane + p) * 2 + 1] += m * g[p * 2 + 1];
        }
    }
  });
}

Var softmax0(const Var& x) {
  if (x.shape().size() != 3) throw ShapeError("softmax0 expects [k,h,w]");
  const int k = x.shape()[0];
  const std::size_t plane = x.numel() / static_cast<std::size_t>(k);
  Tensor out(x.shape());
  const double* px = x.val().data();
  double* po = out.data();
  for (std::size_t p = 0; p < plane; ++p) {
    double mx = px[p];
    for (int f = 1; f < k; ++f) mx = std::max(mx, px[static_cast<std::size_t>(f) * plane + p]);
    double z = 0.0;
    for (int f = 0; f < k; ++f) {
      const double e = std::exp(px[static_cast<std::size_t>(f) * plane + p] - mx);
      po[static_cast<std::size_t>(f) * plane + p] = e;
      z += e;
    }
    const double inv = 1.0 / z;
    for (int f = 0; f < k; ++f) po[static_cast<std::size_t>(f) * plane + p] *= inv;
  }
  auto xn = x.node();
  Tensor saved = out;
  return make_op(std::move(out), {xn}, [xn, saved, k, plane](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = self.grad.data();
    const double* y = saved.data();
    double* gx = xn->grad.data();
    for (std::size_t p = 0; p < plane; ++p) {
      double dot = 0.0;
      for (int f = 0; f < k; ++f)
        dot += g[static_cast<std::size_t>(f) * plane + p] * y[static_cast<std::size_t>(f) * plane + p];
      for (int f = 0; f < k; ++f) {
        const std::size_t i = static_cast<std::size_t>(f) * plane + p;
        gx[i] += y[i] * (g[i] - dot);
      }
    }
  });
}

Var mul_bcast0(const Var& f, const Var& m) {
  if (f.shape().size() != 3 || m.shape().size() != 3 || m.shape()[0] != 1)
    throw ShapeError("mul_bcast0 expects f [c,h,w], m [1,h,w]");
  const int c = f.shape()[0];
  const std::size_t plane = static_cast<std::size_t>(f.shape()[1]) * f.shape()[2];
  if (m.numel() != plane) throw ShapeError("mul_bcast0 plane mismatch");
  Tensor out(f.shape());
  const double* pf = f.val().data();
  const double* pm = m.val().data();
  double* po = out.data();
  for (int ci = 0; ci < c; ++ci)
    for (std::size_t p = 0; p < plane; ++p)
      po[static_cast<std::size_t>(ci) * plane + p] = pf[static_cast<std::size_t>(ci) * plane + p] * pm[p];
  auto fn = f.node(), mn = m.node();
  return make_op(std::move(out), {fn, mn}, [fn, mn, c, plane](Node& self) {
    const double* g = self.grad.data();
    const double* pf = fn->value.data();
    const double* pm = mn->value.data();
    if (fn->requires_grad) {
      fn->ensure_grad();
      double* gf = fn->grad.data();
      for (int ci = 0; ci < c; ++ci)
        for (std::size_t p = 0; p < plane; ++p)
          gf[static_cast<std::size_t>(ci) * plane + p] += g[static_cast<std::size_t>(ci) * plane + p] * pm[p];
    }
    if (mn->requires_grad) {
      mn->ensure_grad();
      double* gm = mn->grad.data();
      for (int ci = 0; ci < c; ++ci)
        for (std::size_t p = 0; p < plane; ++p)
          gm[p] += g[static_cast<std::size_t>(ci) * plane + p] * pf[static_cast<std::size_t>(ci) * plane + p];
    }
  });
}

}  // namespace font::ad
