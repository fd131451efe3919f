#pragma once

#include <cstddef>

#include "font/core/threads.hpp"

namespace font::kernels {

// Dense numeric kernels backing the autodiff ops and metrics. Each kernel has
// a serial reference implementation and an OpenMP variant; both compute every
// output element with the same inner arithmetic order, so outputs are bitwise
// identical. The unqualified functions dispatch on exec_mode().
//
// Conventions:
//  - images/features are CHW row-major, weights OIHW
//  - sampling grids hold normalized coordinates in [-1,1] with pixel centers
//    at 2*(i+0.5)/extent - 1, x before y in the last axis
//  - out-of-range samples clamp to the border

struct Conv2dShape {
  int cin, hin, win;
  int cout, kh, kw;
  int stride, pad;
  int hout() const { return (hin + 2 * pad - kh) / stride + 1; }
  int wout() const { return (win + 2 * pad - kw) / stride + 1; }
};

struct Conv1dShape {
  int cin, tin;
  int cout, k;
  int stride, pad;
  int tout() const { return (tin + 2 * pad - k) / stride + 1; }
};

#define FONT_KERNEL_DECLS                                                                         \
  void matmul(const double* a, const double* b, double* out, int m, int k, int n);               \
  void matmul_tn(const double* a, const double* b, double* out, int m, int k, int n);            \
  void matmul_nt(const double* a, const double* b, double* out, int m, int k, int n);            \
  void conv2d_forward(const double* in, const double* w, const double* bias, double* out,        \
                      const Conv2dShape& s);                                                      \
  void conv2d_backward_input(const double* gout, const double* w, double* gin,                   \
                             const Conv2dShape& s);                                               \
  void conv2d_backward_weights(const double* gout, const double* in, double* gw, double* gb,     \
                               const Conv2dShape& s);                                             \
  void conv1d_forward(const double* in, const double* w, const double* bias, double* out,        \
                      const Conv1dShape& s);                                                      \
  void conv1d_backward_input(const double* gout, const double* w, double* gin,                   \
                             const Conv1dShape& s);                                               \
  void conv1d_backward_weights(const double* gout, const double* in, double* gw, double* gb,     \
                               const Conv1dShape& s);                                             \
  void avg_pool2_forward(const double* in, double* out, int c, int h, int w);                    \
  void avg_pool2_backward(const double* gout, double* gin, int c, int h, int w);                 \
  void resize_bilinear_forward(const double* in, double* out, int c, int hin, int win, int hout, \
                               int wout);                                                         \
  void grid_sample_forward(const double* in, const double* grid, double* out, int c, int h,      \
                           int w, int gh, int gw);                                                \
  void grid_sample_backward(const double* gout, const double* in, const double* grid,            \
                            double* gin, double* ggrid, int c, int h, int w, int gh, int gw);     \
  void gaussian_heatmap_forward(const double* kp, double* out, int n, int h, int w,              \
                                double sigma);                                                    \
  void gaussian_heatmap_backward(const double* gout, const double* kp, double* gkp, int n,       \
                                 int h, int w, double sigma);                                     \
  void sparse_motion_forward(const double* ksrc, const double* amat, const double* kdri,         \
                             double* out, int n, int h, int w);                                   \
  void sparse_motion_backward(const double* gout, const double* amat, const double* kdri,        \
                              double* gksrc, double* gamat, double* gkdri, int n, int h, int w);  \
  void power_spectrum(const double* windows, double* out, int nwin, int nfft);                   \
  void ssim_map(const double* a, const double* b, double* out, int h, int w, double c1,          \
                double c2);

namespace serial {
FONT_KERNEL_DECLS
}

namespace par {
FONT_KERNEL_DECLS
}

// Dispatching front-ends.
FONT_KERNEL_DECLS

#undef FONT_KERNEL_DECLS

// Bilinear resize backward is a scatter; it runs serially in both modes so
// accumulation order is fixed. Kept beside the kernels for locality.
void resize_bilinear_backward(const double* gout, double* gin, int c, int hin, int win, int hout,
                              int wout);

// 11x11 sigma-1.5 gaussian window used by ssim_map; exposed for the tests.
const double* ssim_window11();

}  // namespace font::kernels
