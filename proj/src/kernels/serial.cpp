// Serial reference kernels. These are the ground truth the OpenMP variants
// are tested against; keep them as plain loops.

#include <cstring>
#include <vector>

#include "kernel_inlines.hpp"

namespace font::kernels::serial {

using namespace font::kernels::detail;

void matmul(const double* a, const double* b, double* out, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[static_cast<std::size_t>(i) * k + p] * b[static_cast<std::size_t>(p) * n + j];
      out[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }
}

// out[m,n] = a^T b with a stored [k,m]
void matmul_tn(const double* a, const double* b, double* out, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[static_cast<std::size_t>(p) * m + i] * b[static_cast<std::size_t>(p) * n + j];
      out[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }
}

// out[m,n] = a b^T with b stored [n,k]
void matmul_nt(const double* a, const double* b, double* out, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[static_cast<std::size_t>(i) * k + p] * b[static_cast<std::size_t>(j) * k + p];
      out[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }
}

void conv2d_forward(const double* in, const double* w, const double* bias, double* out,
                    const Conv2dShape& s) {
  const int ho = s.hout(), wo = s.wout();
  for (int co = 0; co < s.cout; ++co)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox)
        out[(static_cast<std::size_t>(co) * ho + oy) * wo + ox] = conv2d_out_at(in, w, bias, s, co, oy, ox);
}

void conv2d_backward_input(const double* gout, const double* w, double* gin,
                           const Conv2dShape& s) {
  for (int ci = 0; ci < s.cin; ++ci)
    for (int iy = 0; iy < s.hin; ++iy)
      for (int ix = 0; ix < s.win; ++ix)
        gin[(static_cast<std::size_t>(ci) * s.hin + iy) * s.win + ix] = conv2d_gin_at(gout, w, s, ci, iy, ix);
}

void conv2d_backward_weights(const double* gout, const double* in, double* gw, double* gb,
                             const Conv2dShape& s) {
  for (int co = 0; co < s.cout; ++co)
    for (int ci = 0; ci < s.cin; ++ci)
      for (int ky = 0; ky < s.kh; ++ky)
        for (int kx = 0; kx < s.kw; ++kx)
          gw[((static_cast<std::size_t>(co) * s.cin + ci) * s.kh + ky) * s.kw + kx] =
              conv2d_gw_at(gout, in, s, co, ci, ky, kx);
  if (gb) {
    const int ho = s.hout(), wo = s.wout();
    for (int co = 0; co < s.cout; ++co) {
      double acc = 0.0;
      const double* gp = gout + static_cast<std::size_t>(co) * ho * wo;
      for (int i = 0; i < ho * wo; ++i) acc += gp[i];
      gb[co] = acc;
    }
  }
}

void conv1d_forward(const double* in, const double* w, const double* bias, double* out,
                    const Conv1dShape& s) {
  const int to = s.tout();
  for (int co = 0; co < s.cout; ++co)
    for (int ot = 0; ot < to; ++ot)
      out[static_cast<std::size_t>(co) * to + ot] = conv1d_out_at(in, w, bias, s, co, ot);
}

void conv1d_backward_input(const double* gout, const double* w, double* gin,
                           const Conv1dShape& s) {
  for (int ci = 0; ci < s.cin; ++ci)
    for (int t = 0; t < s.tin; ++t)
      gin[static_cast<std::size_t>(ci) * s.tin + t] = conv1d_gin_at(gout, w, s, ci, t);
}

void conv1d_backward_weights(const double* gout, const double* in, double* gw, double* gb,
                             const Conv1dShape& s) {
  for (int co = 0; co < s.cout; ++co)
    for (int ci = 0; ci < s.cin; ++ci)
      for (int kk = 0; kk < s.k; ++kk)
        gw[(static_cast<std::size_t>(co) * s.cin + ci) * s.k + kk] = conv1d_gw_at(gout, in, s, co, ci, kk);
  if (gb) {
    const int to = s.tout();
    for (int co = 0; co < s.cout; ++co) {
      double acc = 0.0;
      for (int t = 0; t < to; ++t) acc += gout[static_cast<std::size_t>(co) * to + t];
      gb[co] = acc;
    }
  }
}

void avg_pool2_forward(const double* in, double* out, int c, int h, int w) {
  const int ho = h / 2, wo = w / 2;
  for (int ci = 0; ci < c; ++ci) {
    const double* inp = in + static_cast<std::size_t>(ci) * h * w;
    double* op = out + static_cast<std::size_t>(ci) * ho * wo;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const double* r0 = inp + static_cast<std::size_t>(2 * oy) * w + 2 * ox;
        const double* r1 = r0 + w;
        op[static_cast<std::size_t>(oy) * wo + ox] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  }
}

void avg_pool2_backward(const double* gout, double* gin, int c, int h, int w) {
  const int ho = h / 2, wo = w / 2;
  for (int ci = 0; ci < c; ++ci) {
    const double* gp = gout + static_cast<std::size_t>(ci) * ho * wo;
    double* gi = gin + static_cast<std::size_t>(ci) * h * w;
    for (int iy = 0; iy < h; ++iy)
      for (int ix = 0; ix < w; ++ix) {
        const int oy = iy / 2, ox = ix / 2;
        gi[static_cast<std::size_t>(iy) * w + ix] =
            (oy < ho && ox < wo) ? 0.25 * gp[static_cast<std::size_t>(oy) * wo + ox] : 0.0;
      }
  }
}

void resize_bilinear_forward(const double* in, double* out, int c, int hin, int win, int hout,
                             int wout) {
  for (int ci = 0; ci < c; ++ci) {
    const double* inp = in + static_cast<std::size_t>(ci) * hin * win;
    double* op = out + static_cast<std::size_t>(ci) * hout * wout;
    for (int oy = 0; oy < hout; ++oy)
      for (int ox = 0; ox < wout; ++ox)
        op[static_cast<std::size_t>(oy) * wout + ox] = resize_out_at(inp, hin, win, hout, wout, oy, ox);
  }
}

void grid_sample_forward(const double* in, const double* grid, double* out, int c, int h, int w,
                         int gh, int gw) {
  for (int ci = 0; ci < c; ++ci) {
    const double* plane = in + static_cast<std::size_t>(ci) * h * w;
    double* op = out + static_cast<std::size_t>(ci) * gh * gw;
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx) {
        const double* g = grid + (static_cast<std::size_t>(gy) * gw + gx) * 2;
        op[static_cast<std::size_t>(gy) * gw + gx] = sample_tap(plane, w, make_tap(g[0], g[1], h, w));
      }
  }
}

void grid_sample_backward(const double* gout, const double* in, const double* grid, double* gin,
                          double* ggrid, int c, int h, int w, int gh, int gw) {
  // input grads: one channel per iteration owns its whole slice
  if (gin) {
    for (int ci = 0; ci < c; ++ci) {
      double* gi = gin + static_cast<std::size_t>(ci) * h * w;
      const double* gp = gout + static_cast<std::size_t>(ci) * gh * gw;
      std::memset(gi, 0, sizeof(double) * static_cast<std::size_t>(h) * w);
      for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
          const double* g = grid + (static_cast<std::size_t>(gy) * gw + gx) * 2;
          const BilinearTap t = make_tap(g[0], g[1], h, w);
          const double go = gp[static_cast<std::size_t>(gy) * gw + gx];
          gi[static_cast<std::size_t>(t.y0) * w + t.x0] += go * (1.0 - t.fx) * (1.0 - t.fy);
          gi[static_cast<std::size_t>(t.y0) * w + t.x1] += go * t.fx * (1.0 - t.fy);
          gi[static_cast<std::size_t>(t.y1) * w + t.x0] += go * (1.0 - t.fx) * t.fy;
          gi[static_cast<std::size_t>(t.y1) * w + t.x1] += go * t.fx * t.fy;
        }
    }
  }
  // grid grads: one grid point per iteration, summed over channels
  if (ggrid) {
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx) {
        const double* g = grid + (static_cast<std::size_t>(gy) * gw + gx) * 2;
        const BilinearTap t = make_tap(g[0], g[1], h, w);
        double acc_x = 0.0, acc_y = 0.0;
        for (int ci = 0; ci < c; ++ci) {
          const double* plane = in + static_cast<std::size_t>(ci) * h * w;
          const double go = gout[(static_cast<std::size_t>(ci) * gh + gy) * gw + gx];
          const double v00 = plane[static_cast<std::size_t>(t.y0) * w + t.x0];
          const double v10 = plane[static_cast<std::size_t>(t.y0) * w + t.x1];
          const double v01 = plane[static_cast<std::size_t>(t.y1) * w + t.x0];
          const double v11 = plane[static_cast<std::size_t>(t.y1) * w + t.x1];
          const double dpx = (1.0 - t.fy) * (v10 - v00) + t.fy * (v11 - v01);
          const double dpy = (1.0 - t.fx) * (v01 - v00) + t.fx * (v11 - v10);
          acc_x += go * dpx;
          acc_y += go * dpy;
        }
        // d px / d gx = w/2, d py / d gy = h/2
        ggrid[(static_cast<std::size_t>(gy) * gw + gx) * 2] = acc_x * 0.5 * w;
        ggrid[(static_cast<std::size_t>(gy) * gw + gx) * 2 + 1] = acc_y * 0.5 * h;
      }
  }
}

void gaussian_heatmap_forward(const double* kp, double* out, int n, int h, int w, double sigma) {
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        out[(static_cast<std::size_t>(k) * h + i) * w + j] = heatmap_at(kp, k, i, j, h, w, sigma);
}

void gaussian_heatmap_backward(const double* gout, const double* kp, double* gkp, int n, int h,
                               int w, double sigma) {
  const double inv_s2 = 1.0 / (sigma * sigma);
  for (int k = 0; k < n; ++k) {
    double gx = 0.0, gy = 0.0;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const double hv = heatmap_at(kp, k, i, j, h, w, sigma);
        const double go = gout[(static_cast<std::size_t>(k) * h + i) * w + j];
        gx += go * hv * (pixel_center_x(j, w) - kp[2 * k]) * inv_s2;
        gy += go * hv * (pixel_center_y(i, h) - kp[2 * k + 1]) * inv_s2;
      }
    gkp[2 * k] = gx;
    gkp[2 * k + 1] = gy;
  }
}

void sparse_motion_forward(const double* ksrc, const double* amat, const double* kdri,
                           double* out, int n, int h, int w) {
  // field 0: identity grid
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double* o = out + (static_cast<std::size_t>(i) * w + j) * 2;
      o[0] = pixel_center_x(j, w);
      o[1] = pixel_center_y(i, h);
    }
  for (int k = 0; k < n; ++k) {
    double* field = out + static_cast<std::size_t>(k + 1) * h * w * 2;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double ox, oy;
        sparse_field_at(ksrc, amat, kdri, k, pixel_center_x(j, w), pixel_center_y(i, h), &ox, &oy);
        double* o = field + (static_cast<std::size_t>(i) * w + j) * 2;
        o[0] = ox;
        o[1] = oy;
      }
  }
}

void sparse_motion_backward(const double* gout, const double* amat, const double* kdri,
                            double* gksrc, double* gamat, double* gkdri, int n, int h, int w) {
  // field 0 is constant; per-keypoint reductions over the grid
  for (int k = 0; k < n; ++k) {
    const double* gf = gout + static_cast<std::size_t>(k + 1) * h * w * 2;
    const double* a = amat + 4 * k;
    double sgx = 0.0, sgy = 0.0;
    double ga00 = 0.0, ga01 = 0.0, ga10 = 0.0, ga11 = 0.0;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const double gx = gf[(static_cast<std::size_t>(i) * w + j) * 2];
        const double gy = gf[(static_cast<std::size_t>(i) * w + j) * 2 + 1];
        const double dx = pixel_center_x(j, w) - kdri[2 * k];
        const double dy = pixel_center_y(i, h) - kdri[2 * k + 1];
        sgx += gx;
        sgy += gy;
        ga00 += gx * dx;
        ga01 += gx * dy;
        ga10 += gy * dx;
        ga11 += gy * dy;
      }
    gksrc[2 * k] = sgx;
    gksrc[2 * k + 1] = sgy;
    gamat[4 * k] = ga00;
    gamat[4 * k + 1] = ga01;
    gamat[4 * k + 2] = ga10;
    gamat[4 * k + 3] = ga11;
    gkdri[2 * k] = -(a[0] * sgx + a[2] * sgy);
    gkdri[2 * k + 1] = -(a[1] * sgx + a[3] * sgy);
  }
}

void power_spectrum(const double* windows, double* out, int nwin, int nfft) {
  std::vector<double> re(static_cast<std::size_t>(nfft)), im(static_cast<std::size_t>(nfft));
  const int nbins = nfft / 2 + 1;
  for (int wi = 0; wi < nwin; ++wi) {
    const double* x = windows + static_cast<std::size_t>(wi) * nfft;
    for (int i = 0; i < nfft; ++i) {
      re[static_cast<std::size_t>(i)] = x[i];
      im[static_cast<std::size_t>(i)] = 0.0;
    }
    fft_radix2(re.data(), im.data(), nfft);
    for (int b = 0; b < nbins; ++b)
      out[static_cast<std::size_t>(wi) * nbins + b] =
          re[static_cast<std::size_t>(b)] * re[static_cast<std::size_t>(b)] +
          im[static_cast<std::size_t>(b)] * im[static_cast<std::size_t>(b)];
  }
}

void ssim_map(const double* a, const double* b, double* out, int h, int w, double c1, double c2) {
  const double* win = ssim_window11();
  const int hv = h - 10, wv = w - 10;
  for (int y = 0; y < hv; ++y)
    for (int x = 0; x < wv; ++x)
      out[static_cast<std::size_t>(y) * wv + x] = ssim_window_at(a, b, w, y, x, win, c1, c2);
}

}  // namespace font::kernels::serial
