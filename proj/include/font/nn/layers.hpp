#pragma once

// Small layer wrappers over the autodiff ops. Each layer owns its parameter
// Vars and registers them into a flat name->Var map under a hierarchical
// prefix; checkpoint key layouts are built from those prefixes.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "font/core/autodiff.hpp"
#include "font/core/rng.hpp"

namespace font::nn {

using ad::Var;
using core::Rng;
using core::Tensor;

using ParamMap = std::vector<std::pair<std::string, Var>>;

inline void register_param(ParamMap& out, const std::string& name, const Var& p) {
  out.emplace_back(name, p);
}

struct Linear {
  Var w, b;

  Linear() = default;
  Linear(int in_dim, int out_dim, Rng& rng) {
    const double s = std::sqrt(2.0 / in_dim);
    w = Var(Tensor::randn({out_dim, in_dim}, rng, s), true);
    b = Var(Tensor::zeros({out_dim}), true);
  }

  Var forward(const Var& x) const { return ad::linear(x, w, b); }

  void collect(const std::string& prefix, ParamMap& out) const {
    register_param(out, prefix + "/w", w);
    register_param(out, prefix + "/b", b);
  }
};

struct Conv2d {
  Var w, b;
  int stride = 1, pad = 1;

  Conv2d() = default;
  Conv2d(int cin, int cout, int k, int stride_, int pad_, Rng& rng) : stride(stride_), pad(pad_) {
    const double s = std::sqrt(2.0 / (cin * k * k));
    w = Var(Tensor::randn({cout, cin, k, k}, rng, s), true);
    b = Var(Tensor::zeros({cout}), true);
  }

  Var forward(const Var& x) const { return ad::conv2d(x, w, b, stride, pad); }

  void collect(const std::string& prefix, ParamMap& out) const {
    register_param(out, prefix + "/w", w);
    register_param(out, prefix + "/b", b);
  }
};

struct Conv1d {
  Var w, b;
  int stride = 1, pad = 1;

  Conv1d() = default;
  Conv1d(int cin, int cout, int k, int stride_, int pad_, Rng& rng) : stride(stride_), pad(pad_) {
    const double s = std::sqrt(2.0 / (cin * k));
    w = Var(Tensor::randn({cout, cin, k}, rng, s), true);
    b = Var(Tensor::zeros({cout}), true);
  }

  Var forward(const Var& x) const { return ad::conv1d(x, w, b, stride, pad); }

  void collect(const std::string& prefix, ParamMap& out) const {
    register_param(out, prefix + "/w", w);
    register_param(out, prefix + "/b", b);
  }
};

// Single-layer gated recurrence (LSTM cell). Gates are one fused linear map
// of [x, h]; state is caller-held so calls stay re-entrant.
struct LstmCell {
  Linear gates;  // [4*hidden, in+hidden]
  int hidden = 0;

  LstmCell() = default;
  LstmCell(int in_dim, int hidden_, Rng& rng) : gates(in_dim + hidden_, 4 * hidden_, rng), hidden(hidden_) {
    // forget-gate bias starts at 1 so early training keeps state
    for (int i = hidden; i < 2 * hidden; ++i) gates.b.node()->value.at(i) = 1.0;
  }

  struct State {
    Var h, c;
  };

  State initial_state() const {
    return {Var(Tensor::zeros({hidden})), Var(Tensor::zeros({hidden}))};
  }

  State forward(const Var& x, const State& s) const {
    Var z = gates.forward(ad::concat0({x, s.h}));
    Var i = ad::sigmoid(ad::slice0(z, 0, hidden));
    Var f = ad::sigmoid(ad::slice0(z, hidden, hidden));
    Var o = ad::sigmoid(ad::slice0(z, 2 * hidden, hidden));
    Var g = ad::tanh_op(ad::slice0(z, 3 * hidden, hidden));
    Var c = ad::add(ad::mul(f, s.c), ad::mul(i, g));
    Var h = ad::mul(o, ad::tanh_op(c));
    return {h, c};
  }

  void collect(const std::string& prefix, ParamMap& out) const {
    gates.collect(prefix + "/gates", out);
  }
};

}  // namespace font::nn
