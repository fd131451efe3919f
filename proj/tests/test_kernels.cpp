// Kernel-level tests: the OpenMP variants must match the serial reference
// bitwise, every backward kernel must match central finite differences of its
// forward, and a few closed-form cases pin down conventions (identity grids,
// pixel-center coordinates, FFT vs direct DFT).

#include <doctest.h>

#include <cmath>
#include <vector>

#include "font/core/rng.hpp"
#include "font/core/threads.hpp"
#include "font/kernels/kernels.hpp"
#include "test_util.hpp"

using font::core::Rng;
using namespace font::kernels;
using namespace testutil;

namespace {

// Runs fn once in each mode into separate buffers and requires bitwise match.
template <typename Fn>
void check_modes_bitwise(std::size_t out_elems, Fn fn) {
  std::vector<double> a(out_elems, 0.0), b(out_elems, 0.0);
  const Exec saved = exec_mode();
  set_exec_mode(Exec::serial);
  fn(a.data());
  set_exec_mode(Exec::parallel);
  fn(b.data());
  set_exec_mode(saved);
  CHECK(bitwise_equal(a, b));
}

double identity_x(int j, int w) { return 2.0 * (j + 0.5) / w - 1.0; }
double identity_y(int i, int h) { return 2.0 * (i + 0.5) / h - 1.0; }

std::vector<double> identity_grid(int h, int w) {
  std::vector<double> g(static_cast<std::size_t>(h) * w * 2);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      g[(static_cast<std::size_t>(i) * w + j) * 2] = identity_x(j, w);
      g[(static_cast<std::size_t>(i) * w + j) * 2 + 1] = identity_y(i, h);
    }
  return g;
}

}  // namespace

TEST_CASE("matmul matches a textbook triple loop and is mode-invariant") {
  Rng rng(11);
  const int m = 7, k = 5, n = 9;
  auto a = randn_vec(rng, static_cast<std::size_t>(m) * k);
  auto b = randn_vec(rng, static_cast<std::size_t>(k) * n);
  std::vector<double> want(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p)
      for (int j = 0; j < n; ++j) want[static_cast<std::size_t>(i) * n + j] += a[static_cast<std::size_t>(i) * k + p] * b[static_cast<std::size_t>(p) * n + j];
  std::vector<double> got(static_cast<std::size_t>(m) * n);
  matmul(a.data(), b.data(), got.data(), m, k, n);
  CHECK(max_abs_diff(got, want) < 1e-12);

  // transposed variants agree with explicit transposition
  std::vector<double> at(static_cast<std::size_t>(k) * m), bt(static_cast<std::size_t>(n) * k);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) at[static_cast<std::size_t>(p) * m + i] = a[static_cast<std::size_t>(i) * k + p];
  for (int p = 0; p < k; ++p)
    for (int j = 0; j < n; ++j) bt[static_cast<std::size_t>(j) * k + p] = b[static_cast<std::size_t>(p) * n + j];
  std::vector<double> got_tn(got.size()), got_nt(got.size());
  matmul_tn(at.data(), b.data(), got_tn.data(), m, k, n);
  matmul_nt(a.data(), bt.data(), got_nt.data(), m, k, n);
  CHECK(max_abs_diff(got_tn, want) < 1e-12);
  CHECK(max_abs_diff(got_nt, want) < 1e-12);

  check_modes_bitwise(got.size(), [&](double* out) { matmul(a.data(), b.data(), out, m, k, n); });
}

TEST_CASE("conv2d forward/backward agree with finite differences") {
  Rng rng(22);
  const Conv2dShape s{3, 9, 8, 4, 3, 3, 2, 1};
  const int ho = s.hout(), wo = s.wout();
  auto in = randn_vec(rng, static_cast<std::size_t>(s.cin) * s.hin * s.win);
  auto w = randn_vec(rng, static_cast<std::size_t>(s.cout) * s.cin * s.kh * s.kw, 0.3);
  auto bias = randn_vec(rng, static_cast<std::size_t>(s.cout), 0.1);
  auto gout = randn_vec(rng, static_cast<std::size_t>(s.cout) * ho * wo);

  // scalar objective: <gout, conv(in, w, bias)>
  auto objective = [&] {
    std::vector<double> out(gout.size());
    serial::conv2d_forward(in.data(), w.data(), bias.data(), out.data(), s);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += gout[i] * out[i];
    return acc;
  };

  std::vector<double> gin(in.size()), gw(w.size()), gb(bias.size());
  conv2d_backward_input(gout.data(), w.data(), gin.data(), s);
  conv2d_backward_weights(gout.data(), in.data(), gw.data(), gb.data(), s);

  for (std::size_t i : {std::size_t(0), std::size_t(37), in.size() - 1})
    CHECK(rel_err(gin[i], central_diff(in, i, objective)) < 1e-6);
  for (std::size_t i : {std::size_t(0), std::size_t(19), w.size() - 1})
    CHECK(rel_err(gw[i], central_diff(w, i, objective)) < 1e-6);
  for (std::size_t i = 0; i < bias.size(); ++i)
    CHECK(rel_err(gb[i], central_diff(bias, i, objective)) < 1e-6);

  check_modes_bitwise(gout.size(), [&](double* out) {
    conv2d_forward(in.data(), w.data(), bias.data(), out, s);
  });
  check_modes_bitwise(gin.size(), [&](double* out) {
    conv2d_backward_input(gout.data(), w.data(), out, s);
  });
  check_modes_bitwise(gw.size(), [&](double* out) {
    std::vector<double> gb2(bias.size());
    conv2d_backward_weights(gout.data(), in.data(), out, gb2.data(), s);
  });
}

TEST_CASE("conv1d forward/backward agree with finite differences") {
  Rng rng(33);
  const Conv1dShape s{5, 17, 7, 3, 2, 1};
  const int to = s.tout();
  auto in = randn_vec(rng, static_cast<std::size_t>(s.cin) * s.tin);
  auto w = randn_vec(rng, static_cast<std::size_t>(s.cout) * s.cin * s.k, 0.3);
  auto bias = randn_vec(rng, static_cast<std::size_t>(s.cout), 0.1);
  auto gout = randn_vec(rng, static_cast<std::size_t>(s.cout) * to);

  auto objective = [&] {
    std::vector<double> out(gout.size());
    serial::conv1d_forward(in.data(), w.data(), bias.data(), out.data(), s);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += gout[i] * out[i];
    return acc;
  };

  std::vector<double> gin(in.size()), gw(w.size()), gb(bias.size());
  conv1d_backward_input(gout.data(), w.data(), gin.data(), s);
  conv1d_backward_weights(gout.data(), in.data(), gw.data(), gb.data(), s);

  for (std::size_t i : {std::size_t(0), std::size_t(29), in.size() - 1})
    CHECK(rel_err(gin[i], central_diff(in, i, objective)) < 1e-6);
  for (std::size_t i : {std::size_t(0), std::size_t(11), w.size() - 1})
    CHECK(rel_err(gw[i], central_diff(w, i, objective)) < 1e-6);
  for (std::size_t i = 0; i < bias.size(); ++i)
    CHECK(rel_err(gb[i], central_diff(bias, i, objective)) < 1e-6);

  check_modes_bitwise(gout.size(), [&](double* out) {
    conv1d_forward(in.data(), w.data(), bias.data(), out, s);
  });
}

TEST_CASE("avg_pool2 halves each axis and its backward is the exact transpose") {
  Rng rng(44);
  const int c = 3, h = 8, w = 6;
  auto in = randn_vec(rng, static_cast<std::size_t>(c) * h * w);
  std::vector<double> out(static_cast<std::size_t>(c) * (h / 2) * (w / 2));
  avg_pool2_forward(in.data(), out.data(), c, h, w);
  CHECK(out[0] == doctest::Approx(0.25 * (in[0] + in[1] + in[static_cast<std::size_t>(w)] + in[static_cast<std::size_t>(w) + 1])).epsilon(1e-12));

  auto gout = randn_vec(rng, out.size());
  auto objective = [&] {
    std::vector<double> o(out.size());
    serial::avg_pool2_forward(in.data(), o.data(), c, h, w);
    double acc = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) acc += gout[i] * o[i];
    return acc;
  };
  std::vector<double> gin(in.size());
  avg_pool2_backward(gout.data(), gin.data(), c, h, w);
  for (std::size_t i : {std::size_t(0), std::size_t(41), in.size() - 1})
    CHECK(rel_err(gin[i], central_diff(in, i, objective)) < 1e-6);

  check_modes_bitwise(out.size(), [&](double* o) { avg_pool2_forward(in.data(), o, c, h, w); });
}

TEST_CASE("bilinear resize: identity size is exact, backward is the transpose") {
  Rng rng(55);
  const int c = 2, h = 7, w = 9;
  auto in = randn_vec(rng, static_cast<std::size_t>(c) * h * w);

  std::vector<double> same(in.size());
  resize_bilinear_forward(in.data(), same.data(), c, h, w, h, w);
  CHECK(max_abs_diff(same, in) == 0.0);

  const int ho = 5, wo = 13;
  auto gout = randn_vec(rng, static_cast<std::size_t>(c) * ho * wo);
  auto objective = [&] {
    std::vector<double> o(gout.size());
    serial::resize_bilinear_forward(in.data(), o.data(), c, h, w, ho, wo);
    double acc = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) acc += gout[i] * o[i];
    return acc;
  };
  std::vector<double> gin(in.size());
  resize_bilinear_backward(gout.data(), gin.data(), c, h, w, ho, wo);
  for (std::size_t i : {std::size_t(0), std::size_t(23), in.size() - 1})
    CHECK(rel_err(gin[i], central_diff(in, i, objective)) < 1e-6);

  check_modes_bitwise(gout.size(), [&](double* o) {
    resize_bilinear_forward(in.data(), o, c, h, w, ho, wo);
  });
}

TEST_CASE("grid_sample: identity grid reproduces input exactly; grads match FD") {
  Rng rng(66);
  const int c = 2, h = 6, w = 5;
  auto in = randn_vec(rng, static_cast<std::size_t>(c) * h * w);
  auto grid = identity_grid(h, w);

  std::vector<double> out(in.size());
  grid_sample_forward(in.data(), grid.data(), out.data(), c, h, w, h, w);
  CHECK(max_abs_diff(out, in) == 0.0);

  // random interior grid (keeps FD away from the clamp's kinks)
  const int gh = 4, gw = 7;
  std::vector<double> g2(static_cast<std::size_t>(gh) * gw * 2);
  for (double& v : g2) v = rng.uniform(-0.7, 0.7);
  auto gout = randn_vec(rng, static_cast<std::size_t>(c) * gh * gw);

  auto objective = [&] {
    std::vector<double> o(gout.size());
    serial::grid_sample_forward(in.data(), g2.data(), o.data(), c, h, w, gh, gw);
    double acc = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) acc += gout[i] * o[i];
    return acc;
  };

  std::vector<double> gin(in.size()), ggrid(g2.size());
  grid_sample_backward(gout.data(), in.data(), g2.data(), gin.data(), ggrid.data(), c, h, w, gh,
                       gw);
  for (std::size_t i : {std::size_t(0), std::size_t(13), in.size() - 1})
    CHECK(rel_err(gin[i], central_diff(in, i, objective), 1e-6) < 1e-5);
  for (std::size_t i : {std::size_t(0), std::size_t(25), g2.size() - 1})
    CHECK(rel_err(ggrid[i], central_diff(g2, i, objective), 1e-6) < 1e-5);

  check_modes_bitwise(gout.size(), [&](double* o) {
    grid_sample_forward(in.data(), g2.data(), o, c, h, w, gh, gw);
  });
  check_modes_bitwise(gin.size(), [&](double* o) {
    std::vector<double> gg(ggrid.size());
    grid_sample_backward(gout.data(), in.data(), g2.data(), o, gg.data(), c, h, w, gh, gw);
  });
}

TEST_CASE("gaussian heatmap peaks at the keypoint pixel and grads match FD") {
  Rng rng(77);
  const int n = 3, h = 16, w = 16;
  const double sigma = 0.1;
  // keypoints exactly on pixel centers so the peak is exactly 1
  std::vector<double> kp = {identity_x(4, w), identity_y(6, h),
                            identity_x(10, w), identity_y(3, h),
                            identity_x(8, w), identity_y(12, h)};
  std::vector<double> out(static_cast<std::size_t>(n) * h * w);
  gaussian_heatmap_forward(kp.data(), out.data(), n, h, w, sigma);
  CHECK(out[(0 * h + 6) * w + 4] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out[(1 * h + 3) * w + 10] == doctest::Approx(1.0).epsilon(1e-12));

  auto gout = randn_vec(rng, out.size());
  auto objective = [&] {
    std::vector<double> o(out.size());
    serial::gaussian_heatmap_forward(kp.data(), o.data(), n, h, w, sigma);
    double acc = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) acc += gout[i] * o[i];
    return acc;
  };
  std::vector<double> gkp(kp.size());
  gaussian_heatmap_backward(gout.data(), kp.data(), gkp.data(), n, h, w, sigma);
  for (std::size_t i = 0; i < kp.size(); ++i)
    CHECK(rel_err(gkp[i], central_diff(kp, i, objective)) < 1e-5);

  check_modes_bitwise(out.size(), [&](double* o) {
    gaussian_heatmap_forward(kp.data(), o, n, h, w, sigma);
  });
}

TEST_CASE("sparse motion: field 0 is the identity grid, affine fields match by hand") {
  const int n = 2, h = 4, w = 4;
  std::vector<double> ksrc = {0.1, -0.2, -0.3, 0.4};
  std::vector<double> amat = {1.0, 0.0, 0.0, 1.0,   // identity 2x2
                              0.5, 0.1, -0.2, 0.8};
  std::vector<double> kdri = {0.0, 0.0, 0.2, -0.1};
  std::vector<double> out(static_cast<std::size_t>(n + 1) * h * w * 2);
  sparse_motion_forward(ksrc.data(), amat.data(), kdri.data(), out.data(), n, h, w);

  auto grid = identity_grid(h, w);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(out[i] == grid[i]);

  // field 1 (identity A, kdri = 0): z + ksrc
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const std::size_t o = (static_cast<std::size_t>(h) * w + static_cast<std::size_t>(i) * w + j) * 2;
      CHECK(out[o] == doctest::Approx(identity_x(j, w) + 0.1).epsilon(1e-12));
      CHECK(out[o + 1] == doctest::Approx(identity_y(i, h) - 0.2).epsilon(1e-12));
    }
  // field 2 spot check at (i=1, j=2)
  {
    const double zx = identity_x(2, w), zy = identity_y(1, h);
    const double dx = zx - 0.2, dy = zy + 0.1;
    const std::size_t o = (2 * static_cast<std::size_t>(h) * w + 1 * w + 2) * 2;
    CHECK(out[o] == doctest::Approx(-0.3 + 0.5 * dx + 0.1 * dy).epsilon(1e-12));
    CHECK(out[o + 1] == doctest::Approx(0.4 - 0.2 * dx + 0.8 * dy).epsilon(1e-12));
  }

  Rng rng(88);
  auto gout = randn_vec(rng, out.size());
  auto objective = [&] {
    std::vector<double> o(out.size());
    serial::sparse_motion_forward(ksrc.data(), amat.data(), kdri.data(), o.data(), n, h, w);
    double acc = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) acc += gout[i] * o[i];
    return acc;
  };
  std::vector<double> gksrc(ksrc.size()), gamat(amat.size()), gkdri(kdri.size());
  sparse_motion_backward(gout.data(), amat.data(), kdri.data(), gksrc.data(), gamat.data(),
                         gkdri.data(), n, h, w);
  for (std::size_t i = 0; i < ksrc.size(); ++i)
    CHECK(rel_err(gksrc[i], central_diff(ksrc, i, objective)) < 1e-6);
  for (std::size_t i = 0; i < amat.size(); ++i)
    CHECK(rel_err(gamat[i], central_diff(amat, i, objective)) < 1e-6);
  for (std::size_t i = 0; i < kdri.size(); ++i)
    CHECK(rel_err(gkdri[i], central_diff(kdri, i, objective)) < 1e-6);

  check_modes_bitwise(out.size(), [&](double* o) {
    sparse_motion_forward(ksrc.data(), amat.data(), kdri.data(), o, n, h, w);
  });
}

TEST_CASE("power spectrum matches a direct DFT") {
  Rng rng(99);
  const int nwin = 3, nfft = 64;
  auto windows = randn_vec(rng, static_cast<std::size_t>(nwin) * nfft);
  const int nbins = nfft / 2 + 1;
  std::vector<double> got(static_cast<std::size_t>(nwin) * nbins);
  power_spectrum(windows.data(), got.data(), nwin, nfft);

  for (int wi = 0; wi < nwin; ++wi)
    for (int b = 0; b < nbins; ++b) {
      double re = 0.0, im = 0.0;
      for (int t = 0; t < nfft; ++t) {
        const double ang = -2.0 * M_PI * b * t / nfft;
        re += windows[static_cast<std::size_t>(wi) * nfft + t] * std::cos(ang);
        im += windows[static_cast<std::size_t>(wi) * nfft + t] * std::sin(ang);
      }
      CHECK(got[static_cast<std::size_t>(wi) * nbins + b] ==
            doctest::Approx(re * re + im * im).epsilon(1e-9));
    }

  check_modes_bitwise(got.size(), [&](double* o) {
    power_spectrum(windows.data(), o, nwin, nfft);
  });
}

TEST_CASE("ssim_map is exactly 1 on identical images and below 1 otherwise") {
  Rng rng(111);
  const int h = 20, w = 24;
  auto a = uniform_vec(rng, static_cast<std::size_t>(h) * w, 0.0, 1.0);
  const int hv = h - 10, wv = w - 10;
  std::vector<double> map(static_cast<std::size_t>(hv) * wv);
  ssim_map(a.data(), a.data(), map.data(), h, w, 1e-4, 9e-4);
  for (double v : map) CHECK(v == 1.0);

  auto b = a;
  for (double& v : b) v = 1.0 - v;  // inverted image decorrelates
  ssim_map(a.data(), b.data(), map.data(), h, w, 1e-4, 9e-4);
  double mean = 0.0;
  for (double v : map) mean += v;
  mean /= static_cast<double>(map.size());
  CHECK(mean < 0.5);

  // window is normalized
  const double* win = ssim_window11();
  double sum = 0.0;
  for (int i = 0; i < 121; ++i) sum += win[i];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  check_modes_bitwise(map.size(), [&](double* o) {
    ssim_map(a.data(), b.data(), o, h, w, 1e-4, 9e-4);
  });
}
