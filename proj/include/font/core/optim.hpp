#pragma once

// ADAM optimizer over a fixed parameter list. All state is per-parameter
// dense tensors; updates run serially so training is deterministic.

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "font/core/autodiff.hpp"

namespace font::ad {

class Adam {
 public:
  explicit Adam(std::vector<Var> params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : params_(std::move(params)), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const Var& p : params_) {
      m_.emplace_back(Tensor::zeros(p.shape()));
      v_.emplace_back(Tensor::zeros(p.shape()));
    }
  }

  void zero_grad() {
    for (Var& p : params_) p.grad().fill(0.0);
  }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Var& p = params_[i];
      const double* g = p.grad().data();
      double* w = p.node()->value.data();
      double* m = m_[i].data();
      double* v = v_[i].data();
      const std::size_t n = p.numel();
      for (std::size_t j = 0; j < n; ++j) {
        m[j] = b1_ * m[j] + (1.0 - b1_) * g[j];
        v[j] = b2_ * v[j] + (1.0 - b2_) * g[j] * g[j];
        const double mh = m[j] / c1;
        const double vh = v[j] / c2;
        w[j] -= lr * mh / (std::sqrt(vh) + eps_);
      }
    }
  }

  std::uint64_t steps_taken() const { return t_; }
  const std::vector<Var>& params() const { return params_; }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  double b1_, b2_, eps_;
  std::uint64_t t_ = 0;
};

}  // namespace font::ad
