#pragma once

// Per-element bodies shared by the serial reference kernels and the OpenMP
// variants. Keeping the arithmetic in one place makes the two loop structures
// bitwise comparable.

#include <cmath>

#include "font/kernels/kernels.hpp"

namespace font::kernels::detail {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

inline double conv2d_out_at(const double* in, const double* w, const double* bias,
                            const Conv2dShape& s, int co, int oy, int ox) {
  double acc = bias ? bias[co] : 0.0;
  const int iy0 = oy * s.stride - s.pad;
  const int ix0 = ox * s.stride - s.pad;
  for (int ci = 0; ci < s.cin; ++ci) {
    const double* inp = in + static_cast<std::size_t>(ci) * s.hin * s.win;
    const double* wp = w + (static_cast<std::size_t>(co) * s.cin + ci) * s.kh * s.kw;
    for (int ky = 0; ky < s.kh; ++ky) {
      const int iy = iy0 + ky;
      if (iy < 0 || iy >= s.hin) continue;
      for (int kx = 0; kx < s.kw; ++kx) {
        const int ix = ix0 + kx;
        if (ix < 0 || ix >= s.win) continue;
        acc += inp[static_cast<std::size_t>(iy) * s.win + ix] * wp[ky * s.kw + kx];
      }
    }
  }
  return acc;
}

inline double conv2d_gin_at(const double* gout, const double* w, const Conv2dShape& s, int ci,
                            int iy, int ix) {
  const int ho = s.hout(), wo = s.wout();
  double acc = 0.0;
  for (int co = 0; co < s.cout; ++co) {
    const double* gp = gout + static_cast<std::size_t>(co) * ho * wo;
    const double* wp = w + (static_cast<std::size_t>(co) * s.cin + ci) * s.kh * s.kw;
    for (int ky = 0; ky < s.kh; ++ky) {
      const int num_y = iy + s.pad - ky;
      if (num_y < 0 || num_y % s.stride) continue;
      const int oy = num_y / s.stride;
      if (oy >= ho) continue;
      for (int kx = 0; kx < s.kw; ++kx) {
        const int num_x = ix + s.pad - kx;
        if (num_x < 0 || num_x % s.stride) continue;
        const int ox = num_x / s.stride;
        if (ox >= wo) continue;
        acc += gp[static_cast<std::size_t>(oy) * wo + ox] * wp[ky * s.kw + kx];
      }
    }
  }
  return acc;
}

inline double conv2d_gw_at(const double* gout, const double* in, const Conv2dShape& s, int co,
                           int ci, int ky, int kx) {
  const int ho = s.hout(), wo = s.wout();
  const double* gp = gout + static_cast<std::size_t>(co) * ho * wo;
  const double* inp = in + static_cast<std::size_t>(ci) * s.hin * s.win;
  double acc = 0.0;
  for (int oy = 0; oy < ho; ++oy) {
    const int iy = oy * s.stride - s.pad + ky;
    if (iy < 0 || iy >= s.hin) continue;
    for (int ox = 0; ox < wo; ++ox) {
      const int ix = ox * s.stride - s.pad + kx;
      if (ix < 0 || ix >= s.win) continue;
      acc += gp[static_cast<std::size_t>(oy) * wo + ox] *
             inp[static_cast<std::size_t>(iy) * s.win + ix];
    }
  }
  return acc;
}

inline double conv1d_out_at(const double* in, const double* w, const double* bias,
                            const Conv1dShape& s, int co, int ot) {
  double acc = bias ? bias[co] : 0.0;
  const int t0 = ot * s.stride - s.pad;
  for (int ci = 0; ci < s.cin; ++ci) {
    const double* inp = in + static_cast<std::size_t>(ci) * s.tin;
    const double* wp = w + (static_cast<std::size_t>(co) * s.cin + ci) * s.k;
    for (int kk = 0; kk < s.k; ++kk) {
      const int t = t0 + kk;
      if (t < 0 || t >= s.tin) continue;
      acc += inp[t] * wp[kk];
    }
  }
  return acc;
}

inline double conv1d_gin_at(const double* gout, const double* w, const Conv1dShape& s, int ci,
                            int t) {
  const int to = s.tout();
  double acc = 0.0;
  for (int co = 0; co < s.cout; ++co) {
    const double* gp = gout + static_cast<std::size_t>(co) * to;
    const double* wp = w + (static_cast<std::size_t>(co) * s.cin + ci) * s.k;
    for (int kk = 0; kk < s.k; ++kk) {
      const int num = t + s.pad - kk;
      if (num < 0 || num % s.stride) continue;
      const int ot = num / s.stride;
      if (ot >= to) continue;
      acc += gp[ot] * wp[kk];
    }
  }
  return acc;
}

inline double conv1d_gw_at(const double* gout, const double* in, const Conv1dShape& s, int co,
                           int ci, int kk) {
  const int to = s.tout();
  const double* gp = gout + static_cast<std::size_t>(co) * to;
  const double* inp = in + static_cast<std::size_t>(ci) * s.tin;
  double acc = 0.0;
  for (int ot = 0; ot < to; ++ot) {
    const int t = ot * s.stride - s.pad + kk;
    if (t < 0 || t >= s.tin) continue;
    acc += gp[ot] * inp[t];
  }
  return acc;
}

struct BilinearTap {
  int x0, x1, y0, y1;
  double fx, fy;
};

// Normalized coordinate -> pixel-space tap with border clamp. Pixel centers
// sit at 2*(i+0.5)/extent - 1, so the identity grid reproduces the input
// exactly (fx = fy = 0).
inline BilinearTap make_tap(double gx, double gy, int h, int w) {
  const double px = (gx + 1.0) * 0.5 * w - 0.5;
  const double py = (gy + 1.0) * 0.5 * h - 0.5;
  const double fx0 = std::floor(px);
  const double fy0 = std::floor(py);
  BilinearTap t;
  t.fx = px - fx0;
  t.fy = py - fy0;
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  t.x0 = clampi(x0, 0, w - 1);
  t.x1 = clampi(x0 + 1, 0, w - 1);
  t.y0 = clampi(y0, 0, h - 1);
  t.y1 = clampi(y0 + 1, 0, h - 1);
  return t;
}

inline double sample_tap(const double* plane, int w, const BilinearTap& t) {
  const double v00 = plane[static_cast<std::size_t>(t.y0) * w + t.x0];
  const double v10 = plane[static_cast<std::size_t>(t.y0) * w + t.x1];
  const double v01 = plane[static_cast<std::size_t>(t.y1) * w + t.x0];
  const double v11 = plane[static_cast<std::size_t>(t.y1) * w + t.x1];
  const double top = v00 + t.fx * (v10 - v00);
  const double bot = v01 + t.fx * (v11 - v01);
  return top + t.fy * (bot - top);
}

// Separable resize tap (half-pixel convention).
inline void resize_axis_tap(int o, int in_extent, int out_extent, int* i0, int* i1, double* f) {
  const double s = static_cast<double>(in_extent) / out_extent;
  const double src = (o + 0.5) * s - 0.5;
  const double fl = std::floor(src);
  *f = src - fl;
  const int a = static_cast<int>(fl);
  *i0 = clampi(a, 0, in_extent - 1);
  *i1 = clampi(a + 1, 0, in_extent - 1);
}

inline double resize_out_at(const double* plane, int hin, int win, int hout, int wout, int oy,
                            int ox) {
  int x0, x1, y0, y1;
  double fx, fy;
  resize_axis_tap(ox, win, wout, &x0, &x1, &fx);
  resize_axis_tap(oy, hin, hout, &y0, &y1, &fy);
  const double v00 = plane[static_cast<std::size_t>(y0) * win + x0];
  const double v10 = plane[static_cast<std::size_t>(y0) * win + x1];
  const double v01 = plane[static_cast<std::size_t>(y1) * win + x0];
  const double v11 = plane[static_cast<std::size_t>(y1) * win + x1];
  const double top = v00 + fx * (v10 - v00);
  const double bot = v01 + fx * (v11 - v01);
  return top + fy * (bot - top);
}

inline double pixel_center_x(int j, int w) { return 2.0 * (j + 0.5) / w - 1.0; }
inline double pixel_center_y(int i, int h) { return 2.0 * (i + 0.5) / h - 1.0; }

inline double heatmap_at(const double* kp, int k, int i, int j, int h, int w, double sigma) {
  const double dx = pixel_center_x(j, w) - kp[2 * k];
  const double dy = pixel_center_y(i, h) - kp[2 * k + 1];
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

// Field k >= 1 of the sparse motion stack: K_src^k + A_k (z - K_dri^k).
inline void sparse_field_at(const double* ksrc, const double* amat, const double* kdri, int k,
                            double zx, double zy, double* ox, double* oy) {
  const double dx = zx - kdri[2 * k];
  const double dy = zy - kdri[2 * k + 1];
  const double* a = amat + 4 * k;
  *ox = ksrc[2 * k] + a[0] * dx + a[1] * dy;
  *oy = ksrc[2 * k + 1] + a[2] * dx + a[3] * dy;
}

// Iterative radix-2 complex FFT, in place. n must be a power of two.
inline void fft_radix2(double* re, double* im, int n) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      double tr = re[i];
      re[i] = re[j];
      re[j] = tr;
      double ti = im[i];
      im[i] = im[j];
      im[j] = ti;
    }
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = -6.283185307179586476925286766559 / len;
    const double wr0 = std::cos(ang), wi0 = std::sin(ang);
    for (int i = 0; i < n; i += len) {
      double wr = 1.0, wi = 0.0;
      for (int k = 0; k < len / 2; ++k) {
        const int a = i + k, b = i + k + len / 2;
        const double ur = re[a], ui = im[a];
        const double vr = re[b] * wr - im[b] * wi;
        const double vi = re[b] * wi + im[b] * wr;
        re[a] = ur + vr;
        im[a] = ui + vi;
        re[b] = ur - vr;
        im[b] = ui - vi;
        const double nwr = wr * wr0 - wi * wi0;
        wi = wr * wi0 + wi * wr0;
        wr = nwr;
      }
    }
  }
}

// SSIM over one 11x11 gaussian window anchored at (y, x) of the valid region.
inline double ssim_window_at(const double* a, const double* b, int w, int y, int x,
                             const double* win, double c1, double c2) {
  double mu_a = 0.0, mu_b = 0.0;
  for (int dy = 0; dy < 11; ++dy) {
    for (int dx = 0; dx < 11; ++dx) {
      const double g = win[dy * 11 + dx];
      mu_a += g * a[static_cast<std::size_t>(y + dy) * w + (x + dx)];
      mu_b += g * b[static_cast<std::size_t>(y + dy) * w + (x + dx)];
    }
  }
  double var_a = 0.0, var_b = 0.0, cov = 0.0;
  for (int dy = 0; dy < 11; ++dy) {
    for (int dx = 0; dx < 11; ++dx) {
      const double g = win[dy * 11 + dx];
      const double da = a[static_cast<std::size_t>(y + dy) * w + (x + dx)] - mu_a;
      const double db = b[static_cast<std::size_t>(y + dy) * w + (x + dx)] - mu_b;
      var_a += g * da * da;
      var_b += g * db * db;
      cov += g * da * db;
    }
  }
  return ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
         ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
}

}  // namespace font::kernels::detail
