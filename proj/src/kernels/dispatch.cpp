// Dispatching front-ends plus the serial-only pieces (scatter resize backward
// and the shared SSIM window table).

#include <cmath>
#include <cstring>

#include "kernel_inlines.hpp"

namespace font::kernels {

#define FONT_FWD(name, params, args)     \
  void name params {                     \
    if (exec_mode() == Exec::parallel)   \
      par::name args;                    \
    else                                 \
      serial::name args;                 \
  }

FONT_FWD(matmul, (const double* a, const double* b, double* out, int m, int k, int n),
         (a, b, out, m, k, n))
FONT_FWD(matmul_tn, (const double* a, const double* b, double* out, int m, int k, int n),
         (a, b, out, m, k, n))
FONT_FWD(matmul_nt, (const double* a, const double* b, double* out, int m, int k, int n),
         (a, b, out, m, k, n))
FONT_FWD(conv2d_forward,
         (const double* in, const double* w, const double* bias, double* out,
          const Conv2dShape& s),
         (in, w, bias, out, s))
FONT_FWD(conv2d_backward_input,
         (const double* gout, const double* w, double* gin, const Conv2dShape& s),
         (gout, w, gin, s))
FONT_FWD(conv2d_backward_weights,
         (const double* gout, const double* in, double* gw, double* gb, const Conv2dShape& s),
         (gout, in, gw, gb, s))
FONT_FWD(conv1d_forward,
         (const double* in, const double* w, const double* bias, double* out,
          const Conv1dShape& s),
         (in, w, bias, out, s))
FONT_FWD(conv1d_backward_input,
         (const double* gout, const double* w, double* gin, const Conv1dShape& s),
         (gout, w, gin, s))
FONT_FWD(conv1d_backward_weights,
         (const double* gout, const double* in, double* gw, double* gb, const Conv1dShape& s),
         (gout, in, gw, gb, s))
FONT_FWD(avg_pool2_forward, (const double* in, double* out, int c, int h, int w),
         (in, out, c, h, w))
FONT_FWD(avg_pool2_backward, (const double* gout, double* gin, int c, int h, int w),
         (gout, gin, c, h, w))
FONT_FWD(resize_bilinear_forward,
         (const double* in, double* out, int c, int hin, int win, int hout, int wout),
         (in, out, c, hin, win, hout, wout))
FONT_FWD(grid_sample_forward,
         (const double* in, const double* grid, double* out, int c, int h, int w, int gh, int gw),
         (in, grid, out, c, h, w, gh, gw))
FONT_FWD(grid_sample_backward,
         (const double* gout, const double* in, const double* grid, double* gin, double* ggrid,
          int c, int h, int w, int gh, int gw),
         (gout, in, grid, gin, ggrid, c, h, w, gh, gw))
FONT_FWD(gaussian_heatmap_forward, (const double* kp, double* out, int n, int h, int w,
                                    double sigma),
         (kp, out, n, h, w, sigma))
FONT_FWD(gaussian_heatmap_backward,
         (const double* gout, const double* kp, double* gkp, int n, int h, int w, double sigma),
         (gout, kp, gkp, n, h, w, sigma))
FONT_FWD(sparse_motion_forward,
         (const double* ksrc, const double* amat, const double* kdri, double* out, int n, int h,
          int w),
         (ksrc, amat, kdri, out, n, h, w))
FONT_FWD(sparse_motion_backward,
         (const double* gout, const double* amat, const double* kdri, double* gksrc,
          double* gamat, double* gkdri, int n, int h, int w),
         (gout, amat, kdri, gksrc, gamat, gkdri, n, h, w))
FONT_FWD(power_spectrum, (const double* windows, double* out, int nwin, int nfft),
         (windows, out, nwin, nfft))
FONT_FWD(ssim_map,
         (const double* a, const double* b, double* out, int h, int w, double c1, double c2),
         (a, b, out, h, w, c1, c2))

#undef FONT_FWD

// Exact transpose of resize_bilinear_forward: scatter each output gradient
// into the four input taps. Accumulation order is data-dependent, so this
// stays serial in both modes.
void resize_bilinear_backward(const double* gout, double* gin, int c, int hin, int win, int hout,
                              int wout) {
  std::memset(gin, 0, sizeof(double) * static_cast<std::size_t>(c) * hin * win);
  for (int ci = 0; ci < c; ++ci) {
    const double* gp = gout + static_cast<std::size_t>(ci) * hout * wout;
    double* gi = gin + static_cast<std::size_t>(ci) * hin * win;
    for (int oy = 0; oy < hout; ++oy) {
      int y0, y1;
      double fy;
      detail::resize_axis_tap(oy, hin, hout, &y0, &y1, &fy);
      for (int ox = 0; ox < wout; ++ox) {
        int x0, x1;
        double fx;
        detail::resize_axis_tap(ox, win, wout, &x0, &x1, &fx);
        const double g = gp[static_cast<std::size_t>(oy) * wout + ox];
        gi[static_cast<std::size_t>(y0) * win + x0] += g * (1.0 - fx) * (1.0 - fy);
        gi[static_cast<std::size_t>(y0) * win + x1] += g * fx * (1.0 - fy);
        gi[static_cast<std::size_t>(y1) * win + x0] += g * (1.0 - fx) * fy;
        gi[static_cast<std::size_t>(y1) * win + x1] += g * fx * fy;
      }
    }
  }
}

const double* ssim_window11() {
  static const double* win = [] {
    static double w[121];
    double sum = 0.0;
    for (int y = 0; y < 11; ++y)
      for (int x = 0; x < 11; ++x) {
        const double dy = y - 5.0, dx = x - 5.0;
        w[y * 11 + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
        sum += w[y * 11 + x];
      }
    for (double& v : w) v /= sum;
    return static_cast<const double*>(w);
  }();
  return win;
}

}  // namespace font::kernels
