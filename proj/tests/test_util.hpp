#pragma once

// Shared helpers for the test suites: deterministic random fills, max-abs
// comparison, and a central-difference scalar gradient checker.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "font/core/rng.hpp"

namespace testutil {

inline std::vector<double> randn_vec(font::core::Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline std::vector<double> uniform_vec(font::core::Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::fabs(a[i] - b[i]);
    if (d > m) m = d;
  }
  return m;
}

inline bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::uint64_t ba, bb;
    static_assert(sizeof(double) == sizeof(std::uint64_t));
    __builtin_memcpy(&ba, &a[i], 8);
    __builtin_memcpy(&bb, &b[i], 8);
    if (ba != bb) return false;
  }
  return true;
}

// Central finite difference of a scalar function w.r.t. one buffer entry.
inline double central_diff(std::vector<double>& buf, std::size_t i,
                           const std::function<double()>& f, double eps = 1e-5) {
  const double saved = buf[i];
  buf[i] = saved + eps;
  const double up = f();
  buf[i] = saved - eps;
  const double dn = f();
  buf[i] = saved;
  return (up - dn) / (2.0 * eps);
}

// Relative error with an absolute floor, as used by all gradient checks.
inline double rel_err(double got, double want, double floor = 1e-8) {
  const double denom = std::fabs(want) > floor ? std::fabs(want) : floor;
  return std::fabs(got - want) / denom;
}

}  // namespace testutil
