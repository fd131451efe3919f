#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "doctest.h"
#include "font/core/errors.hpp"
#include "font/core/rng.hpp"
#include "font/core/tensor.hpp"
#include "font/flowgen/sync.hpp"
#include "font/media/synth.hpp"
#include "font/metrics/metrics.hpp"
#include "test_util.hpp"

using namespace font;
using core::Rng;
using core::Tensor;
using flowgen::SyncEmbedder;
using flowgen::SyncEmbedderConfig;

namespace {

// Independent windowed-similarity transcription: raw-moment statistics and a
// freshly derived gaussian window, structured nothing like the library loop.
double ssim_reference(const Tensor& ga, const Tensor& gb) {
  const int h = ga.dim(0), w = ga.dim(1);
  double win[121];
  double wsum = 0.0;
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 11; ++x) {
      const double dy = y - 5.0, dx = x - 5.0;
      win[y * 11 + x] = std::exp(-(dx * dx + dy * dy) / 4.5);  // 2 * 1.5^2
      wsum += win[y * 11 + x];
    }
  for (double& v : win) v /= wsum;

  double total = 0.0;
  int cnt = 0;
  for (int y = 0; y + 11 <= h; ++y)
    for (int x = 0; x + 11 <= w; ++x) {
      double ea = 0, eb = 0, eaa = 0, ebb = 0, eab = 0;
      for (int dy = 0; dy < 11; ++dy)
        for (int dx = 0; dx < 11; ++dx) {
          const double g = win[dy * 11 + dx];
          const double av = ga.at(y + dy, x + dx), bv = gb.at(y + dy, x + dx);
          ea += g * av;
          eb += g * bv;
          eaa += g * av * av;
          ebb += g * bv * bv;
          eab += g * av * bv;
        }
      const double va = eaa - ea * ea, vb = ebb - eb * eb, cab = eab - ea * eb;
      total += ((2.0 * ea * eb + 1e-4) * (2.0 * cab + 9e-4)) /
               ((ea * ea + eb * eb + 1e-4) * (va + vb + 9e-4));
      ++cnt;
    }
  return total / cnt;
}

// Independent transcription of the sharpness procedure: collects edge pixels
// into a list, filters blocks through a hash map, then measures widths.
double cpbd_reference(const Tensor& gray01) {
  const int h = gray01.dim(0), w = gray01.dim(1);
  std::vector<double> px(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = gray01[i] * 255.0;
  auto at = [&](int r, int c) { return px[static_cast<std::size_t>(r) * w + c]; };

  std::vector<double> sg(px.size(), 0.0);
  double peak = 0.0;
  for (int c = 1; c < w - 1; ++c)
    for (int r = 1; r < h - 1; ++r) {
      const double right = at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1);
      const double left = at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1);
      sg[static_cast<std::size_t>(r) * w + c] = std::fabs(right - left);
      peak = std::max(peak, sg[static_cast<std::size_t>(r) * w + c]);
    }
  if (peak <= 0.0) return 0.0;

  struct Px {
    int r, c;
  };
  std::vector<Px> edges;
  std::unordered_map<long long, long long> block_count;
  for (int r = 1; r < h - 1; ++r)
    for (int c = 1; c < w - 1; ++c) {
      const double g = sg[static_cast<std::size_t>(r) * w + c];
      if (g > 0.1 * peak && g >= sg[static_cast<std::size_t>(r) * w + c - 1] &&
          g >= sg[static_cast<std::size_t>(r) * w + c + 1]) {
        edges.push_back({r, c});
        ++block_count[static_cast<long long>(r / 64) * 1000000 + c / 64];
      }
    }

  long long kept_below = 0, kept_total = 0;
  for (const Px& e : edges) {
    const long long key = static_cast<long long>(e.r / 64) * 1000000 + e.c / 64;
    const int bh = std::min(64, h - (e.r / 64) * 64), bw = std::min(64, w - (e.c / 64) * 64);
    if (static_cast<double>(block_count[key]) <= 0.002 * bh * bw) continue;

    const bool up = at(e.r, e.c + 1) >= at(e.r, e.c - 1);
    int j = e.c, k = e.c;
    while (j > 0 && (up ? at(e.r, j - 1) < at(e.r, j) : at(e.r, j - 1) > at(e.r, j))) --j;
    while (k < w - 1 && (up ? at(e.r, k + 1) > at(e.r, k) : at(e.r, k + 1) < at(e.r, k))) ++k;
    if (k == j) continue;
    const double wjnb = std::fabs(at(e.r, k) - at(e.r, j)) <= 50.0 ? 5.0 : 3.0;
    const double pblur = 1.0 - std::exp(-std::pow((k - j) / wjnb, 3.6));
    ++kept_total;
    if (pblur <= 1.0 - std::exp(-1.0)) ++kept_below;
  }
  if (kept_total == 0) return 0.0;
  return static_cast<double>(kept_below) / static_cast<double>(kept_total);
}

Tensor checkerboard(int h, int w, int cell, double lo, double hi) {
  Tensor t({h, w});
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) t.at(r, c) = ((r / cell + c / cell) % 2) ? hi : lo;
  return t;
}

Tensor gaussian_blur(const Tensor& g, double sigma) {
  const int h = g.dim(0), w = g.dim(1);
  const int rad = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * rad + 1);
  double s = 0.0;
  for (int i = -rad; i <= rad; ++i) {
    k[i + rad] = std::exp(-0.5 * i * i / (sigma * sigma));
    s += k[i + rad];
  }
  for (double& v : k) v /= s;
  auto clampi = [](int v, int hi) { return std::min(std::max(v, 0), hi); };
  Tensor tmp({h, w}), out({h, w});
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = -rad; i <= rad; ++i) acc += k[i + rad] * g.at(r, clampi(c + i, w - 1));
      tmp.at(r, c) = acc;
    }
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = -rad; i <= rad; ++i) acc += k[i + rad] * tmp.at(clampi(r + i, h - 1), c);
      out.at(r, c) = acc;
    }
  return out;
}

Tensor ramp_noise_image(int h, int w, double sigma, int seed) {
  Rng rng(static_cast<std::uint64_t>(seed));
  Tensor t({h, w});
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) t.at(r, c) = static_cast<double>(r + c) / (h + w - 2);
  if (sigma > 0.0)
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] += sigma * rng.normal();
  return t;
}

Tensor random_landmarks(Rng& rng, int n) {
  Tensor t({n, 2});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

// Audio exactly encodes the mouth trajectory; frames render it as a
// brightness split. Synchrony is decidable from any window.
media::SyntheticClip stub_clip(int frames, int size, int seed) {
  Rng rng(static_cast<std::uint64_t>(seed));
  const double f1 = 1.0 + rng.uniform_int(3), p1 = rng.uniform(0.0, 6.28);
  const double f2 = 3.0 + rng.uniform_int(3), p2 = rng.uniform(0.0, 6.28);
  media::SyntheticClip clip;
  clip.frames.fps = 25.0;
  for (int t = 0; t < frames; ++t) {
    double m = 0.5 + 0.3 * std::sin(6.2831853 * f1 * t / frames + p1) +
               0.2 * std::sin(6.2831853 * f2 * t / frames + p2);
    m = std::min(1.0, std::max(0.0, m));
    clip.mouth.push_back(m);
    Tensor img = Tensor::zeros({size, size, 3});
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j)
        for (int c = 0; c < 3; ++c) img.at(i, j, c) = i < size / 2 ? m : 1.0 - m;
    clip.frames.frames.push_back(img);
    media::AudioFeature af;
    af.coeffs = Tensor::zeros({28, 12});
    af.coeffs.fill(m);
    af.frame_index = t;
    clip.audio_features.push_back(af);
  }
  return clip;
}

}  // namespace

TEST_CASE("image similarity metric is exact on identical images and bounded") {
  Rng rng(41);
  Tensor gray = Tensor::uniform({20, 24}, rng, 0.0, 1.0);
  CHECK(std::fabs(metrics::metric_ssim(gray, gray) - 1.0) <= 1e-9);

  Tensor color = Tensor::uniform({16, 16, 3}, rng, 0.0, 1.0);
  CHECK(std::fabs(metrics::metric_ssim(color, color) - 1.0) <= 1e-9);

  Tensor flat({12, 12});
  flat.fill(0.37);
  CHECK(std::fabs(metrics::metric_ssim(flat, flat) - 1.0) <= 1e-9);

  // Symmetric and bounded above by 1 on random pairs.
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = Tensor::uniform({15, 13}, rng, 0.0, 1.0);
    Tensor b = Tensor::uniform({15, 13}, rng, 0.0, 1.0);
    const double ab = metrics::metric_ssim(a, b);
    const double ba = metrics::metric_ssim(b, a);
    CHECK(std::fabs(ab - ba) <= 1e-9);
    CHECK(ab <= 1.0 + 1e-12);
    CHECK(ab >= -1.0 - 1e-12);
  }

  CHECK_THROWS_AS(metrics::metric_ssim(gray, Tensor::zeros({24, 20})), ShapeError);
  CHECK_THROWS_AS(metrics::metric_ssim(Tensor::zeros({8, 8}), Tensor::zeros({8, 8})), ShapeError);
  CHECK_THROWS_AS(metrics::metric_ssim(Tensor::zeros({16, 16, 2}), Tensor::zeros({16, 16, 2})),
                  ShapeError);
}

TEST_CASE("image similarity metric matches an independent windowed transcription") {
  const Tensor ramp = ramp_noise_image(24, 32, 0.0, 0);
  const Tensor noisy = ramp_noise_image(24, 32, 0.1, 0);
  const double got = metrics::metric_ssim(ramp, noisy);
  const double want = ssim_reference(ramp, noisy);
  CHECK(std::fabs(got - want) <= 1e-6);
  CHECK(got < 1.0);  // noise must cost similarity
  CHECK(got > 0.0);

  // Color inputs reduce through the documented luma weights.
  Rng rng(77);
  Tensor ca = Tensor::uniform({14, 18, 3}, rng, 0.0, 1.0);
  Tensor cb = Tensor::uniform({14, 18, 3}, rng, 0.0, 1.0);
  Tensor la({14, 18}), lb({14, 18});
  for (int r = 0; r < 14; ++r)
    for (int c = 0; c < 18; ++c) {
      la.at(r, c) = 0.299 * ca.at(r, c, 0) + 0.587 * ca.at(r, c, 1) + 0.114 * ca.at(r, c, 2);
      lb.at(r, c) = 0.299 * cb.at(r, c, 0) + 0.587 * cb.at(r, c, 1) + 0.114 * cb.at(r, c, 2);
    }
  CHECK(metrics::metric_ssim(ca, cb) == doctest::Approx(metrics::metric_ssim(la, lb)).epsilon(1e-12));
}

TEST_CASE("sharpness metric: flat images, blur ordering, brightness invariance") {
  Tensor flat({32, 32});
  flat.fill(0.5);
  CHECK(metrics::metric_cpbd(flat) == 0.0);
  CHECK(metrics::metric_cpbd(Tensor::zeros({2, 2})) == 0.0);

  // A sharp step edge must outscore a heavily blurred copy of itself.
  Tensor step({48, 48});
  for (int r = 0; r < 48; ++r)
    for (int c = 0; c < 48; ++c) step.at(r, c) = c < 24 ? 0.15 : 0.85;
  const double sharp = metrics::metric_cpbd(step);
  const double blurred = metrics::metric_cpbd(gaussian_blur(step, 5.0));
  CHECK(sharp > blurred);

  // Global brightness offsets that do not saturate leave the score alone.
  Tensor board = checkerboard(48, 48, 8, 0.3, 0.6);
  Tensor brighter = board;
  for (std::size_t i = 0; i < brighter.numel(); ++i) brighter[i] += 0.1;
  CHECK(std::fabs(metrics::metric_cpbd(board) - metrics::metric_cpbd(brighter)) < 0.02);

  // Deterministic: recomputation is bitwise identical.
  const Tensor probe = gaussian_blur(checkerboard(40, 40, 8, 0.0, 1.0), 1.0);
  CHECK(testutil::bitwise_equal({metrics::metric_cpbd(probe)}, {metrics::metric_cpbd(probe)}));
}

TEST_CASE("sharpness metric matches an independent transcription") {
  // Crisp checkerboard: every edge is one pixel wide, so the score saturates.
  Tensor board = checkerboard(64, 64, 8, 0.0, 1.0);
  CHECK(std::fabs(metrics::metric_cpbd(board) - cpbd_reference(board)) <= 1e-3);
  CHECK(metrics::metric_cpbd(board) == doctest::Approx(1.0).epsilon(1e-9));

  // Mildly blurred checkerboard: widths spread, the score moves off 1.
  Tensor soft = gaussian_blur(board, 1.0);
  const double got_soft = metrics::metric_cpbd(soft);
  CHECK(std::fabs(got_soft - cpbd_reference(soft)) <= 1e-3);

  // Noisy ramp exercises threshold, block filtering, and both polarities.
  Tensor noisy = ramp_noise_image(96, 80, 0.05, 3);
  CHECK(std::fabs(metrics::metric_cpbd(noisy) - cpbd_reference(noisy)) <= 1e-3);

  // Color path reduces to luma before measuring.
  Rng rng(9);
  Tensor color = Tensor::uniform({48, 48, 3}, rng, 0.0, 1.0);
  Tensor luma({48, 48});
  for (int r = 0; r < 48; ++r)
    for (int c = 0; c < 48; ++c)
      luma.at(r, c) =
          0.299 * color.at(r, c, 0) + 0.587 * color.at(r, c, 1) + 0.114 * color.at(r, c, 2);
  CHECK(metrics::metric_cpbd(color) == doctest::Approx(metrics::metric_cpbd(luma)).epsilon(1e-12));
}

TEST_CASE("landmark distance is a metric and matches hand computations") {
  Rng rng(21);

  // Identity and the 3-4-5 offset.
  std::vector<Tensor> base;
  for (int i = 0; i < 4; ++i) base.push_back(random_landmarks(rng, 7));
  CHECK(metrics::metric_lmd(base, base) == 0.0);

  std::vector<Tensor> shifted;
  for (const Tensor& t : base) {
    Tensor s = t;
    for (int k = 0; k < s.dim(0); ++k) {
      s.at(k, 0) += 0.3;
      s.at(k, 1) += 0.4;
    }
    shifted.push_back(s);
  }
  CHECK(metrics::metric_lmd(base, shifted) == doctest::Approx(0.5).epsilon(1e-12));

  // Nonnegativity, symmetry, triangle inequality on random triples.
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Tensor> a, b, c;
    for (int i = 0; i < 3; ++i) {
      a.push_back(random_landmarks(rng, 5));
      b.push_back(random_landmarks(rng, 5));
      c.push_back(random_landmarks(rng, 5));
    }
    const double ab = metrics::metric_lmd(a, b);
    const double ba = metrics::metric_lmd(b, a);
    const double ac = metrics::metric_lmd(a, c);
    const double cb = metrics::metric_lmd(c, b);
    CHECK(ab >= 0.0);
    CHECK(std::fabs(ab - ba) <= 1e-15);
    CHECK(ab <= ac + cb + 1e-12);
  }

  // Synthetic generated-vs-ground-truth pair against a hand-built mean.
  media::SynthSpec spec;
  spec.frames = 6;
  spec.size = 32;
  const media::SyntheticClip gen_clip = media::synth_generate(spec, 31);
  const media::SyntheticClip ref_clip = media::synth_generate(spec, 32);
  double hand = 0.0;
  int terms = 0;
  for (int t = 0; t < 6; ++t)
    for (int k = 0; k < spec.n_keypoints; ++k) {
      const double dx = gen_clip.gt_keypoints[t].at(k, 0) - ref_clip.gt_keypoints[t].at(k, 0);
      const double dy = gen_clip.gt_keypoints[t].at(k, 1) - ref_clip.gt_keypoints[t].at(k, 1);
      hand += std::hypot(dx, dy);
      ++terms;
    }
  hand /= terms;
  CHECK(std::fabs(metrics::metric_lmd(gen_clip.gt_keypoints, ref_clip.gt_keypoints) - hand) <=
        1e-7);

  // The frame-driven overload with a lookup landmarker agrees exactly.
  auto lookup = [&](const Tensor& frame) -> Tensor {
    for (int t = 0; t < gen_clip.count(); ++t) {
      bool same = true;
      const Tensor& cand = gen_clip.frames.frames[t];
      for (std::size_t i = 0; i < cand.numel() && same; ++i) same = cand[i] == frame[i];
      if (same) return gen_clip.gt_keypoints[t];
    }
    for (int t = 0; t < ref_clip.count(); ++t) {
      bool same = true;
      const Tensor& cand = ref_clip.frames.frames[t];
      for (std::size_t i = 0; i < cand.numel() && same; ++i) same = cand[i] == frame[i];
      if (same) return ref_clip.gt_keypoints[t];
    }
    throw std::runtime_error("unknown frame");
  };
  metrics::Landmarker lm = lookup;
  CHECK(metrics::metric_lmd(gen_clip.frames, ref_clip.frames, lm) ==
        doctest::Approx(hand).epsilon(1e-12));

  // Landmarker failures carry the frame index.
  metrics::Landmarker flaky = [](const Tensor& frame) -> Tensor {
    if (frame.at(0, 0, 0) > 0.5) throw std::runtime_error("detector lost the face");
    Tensor t({2, 2});
    return t;
  };
  media::FrameSequence seq;
  for (int i = 0; i < 5; ++i) {
    Tensor f = Tensor::zeros({4, 4, 3});
    if (i == 3) f.fill(0.9);
    seq.frames.push_back(f);
  }
  try {
    metrics::metric_lmd(seq, seq, flaky);
    FAIL("expected an estimator error");
  } catch (const EstimatorError& e) {
    CHECK(e.frame_index == 3);
    CHECK(std::string(e.what()).find("frame 3") != std::string::npos);
  }

  // Length and shape guards.
  std::vector<Tensor> two(base.begin(), base.begin() + 2);
  CHECK_THROWS_AS(metrics::metric_lmd(base, two), LengthError);
  CHECK_THROWS_AS(metrics::metric_lmd(std::vector<Tensor>{}, std::vector<Tensor>{}),
                  EmptyInputError);
  std::vector<Tensor> narrow = base;
  narrow[1] = random_landmarks(rng, 3);
  CHECK_THROWS_AS(metrics::metric_lmd(base, narrow), ShapeError);
}

TEST_CASE("sync confidence metric separates matched, shifted, and reversed audio") {
  SyncEmbedderConfig cfg;
  cfg.window = 5;
  cfg.embed_dim = 24;
  cfg.base_channels = 6;

  std::vector<media::SyntheticClip> train;
  for (int i = 0; i < 50; ++i) train.push_back(stub_clip(20, 16, 400 + i));
  SyncEmbedder emb(cfg);
  flowgen::SyncTrainConfig tc;
  tc.steps = 600;
  tc.lr = 1.5e-3;
  tc.seed = 4;
  flowgen::train_sync_embedder(emb, train, tc);

  double matched = 0.0, shifted = 0.0, reversed = 0.0;
  const int held = 4;
  for (int i = 0; i < held; ++i) {
    const media::SyntheticClip clip = stub_clip(20, 16, 900 + i);
    matched += metrics::metric_lsec(clip.frames, clip.audio_features, emb);

    std::vector<media::AudioFeature> off(clip.audio_features.begin() + 5,
                                         clip.audio_features.end());
    media::FrameSequence head;
    head.frames.assign(clip.frames.frames.begin(), clip.frames.frames.end() - 5);
    shifted += metrics::metric_lsec(head, off, emb);

    std::vector<media::AudioFeature> rev(clip.audio_features.rbegin(),
                                         clip.audio_features.rend());
    reversed += metrics::metric_lsec(clip.frames, rev, emb);
  }
  matched /= held;
  shifted /= held;
  reversed /= held;
  INFO("matched ", matched, " shifted ", shifted, " reversed ", reversed);
  CHECK(matched - shifted > 0.3);
  CHECK(matched > reversed);

  // Identical inputs give the identical score, bitwise.
  const media::SyntheticClip clip = stub_clip(20, 16, 990);
  const double once = metrics::metric_lsec(clip.frames, clip.audio_features, emb);
  const double twice = metrics::metric_lsec(clip.frames, clip.audio_features, emb);
  CHECK(testutil::bitwise_equal({once}, {twice}));

  // Length guards: window underrun and frame/audio mismatch.
  media::FrameSequence tiny;
  tiny.frames.assign(clip.frames.frames.begin(), clip.frames.frames.begin() + 3);
  std::vector<media::AudioFeature> tiny_audio(clip.audio_features.begin(),
                                              clip.audio_features.begin() + 3);
  CHECK_THROWS_AS(metrics::metric_lsec(tiny, tiny_audio, emb), LengthError);
  CHECK_THROWS_AS(metrics::metric_lsec(clip.frames, tiny_audio, emb), LengthError);
}

TEST_CASE("metrics report assembles, serializes, and round-trips") {
  media::SynthSpec spec;
  spec.frames = 8;
  spec.size = 32;
  const media::SyntheticClip a = media::synth_generate(spec, 61);
  const media::SyntheticClip b = media::synth_generate(spec, 62);

  // Landmarker backed by ground truth, keyed on full frame content.
  auto same_frame = [](const Tensor& x, const Tensor& y) {
    for (std::size_t i = 0; i < x.numel(); ++i)
      if (x[i] != y[i]) return false;
    return true;
  };
  metrics::Landmarker lm = [&](const Tensor& frame) -> Tensor {
    for (int t = 0; t < a.count(); ++t)
      if (same_frame(a.frames.frames[t], frame)) return a.gt_keypoints[t];
    for (int t = 0; t < b.count(); ++t)
      if (same_frame(b.frames.frames[t], frame)) return b.gt_keypoints[t];
    throw std::runtime_error("unknown frame");
  };

  SyncEmbedderConfig scfg;
  scfg.window = 5;
  scfg.embed_dim = 16;
  scfg.base_channels = 4;
  SyncEmbedder emb(scfg);

  metrics::EvaluateOptions opts;
  opts.landmarker = &lm;
  opts.audio = &a.audio_features;
  opts.embedder = &emb;
  opts.with_per_frame = true;
  const metrics::MetricsReport rep = metrics::evaluate_sequences(a.frames, b.frames, opts);

  REQUIRE(rep.per_frame.size() == 8);
  CHECK(rep.lmd.has_value());
  CHECK(rep.lsec_local.has_value());
  CHECK(*rep.lmd == doctest::Approx(metrics::metric_lmd(a.gt_keypoints, b.gt_keypoints))
                        .epsilon(1e-12));
  CHECK(*rep.lsec_local ==
        doctest::Approx(metrics::metric_lsec(a.frames, a.audio_features, emb)).epsilon(1e-12));

  // Aggregates are the means of the per-frame rows.
  double ssim_sum = 0.0, cpbd_sum = 0.0;
  for (const auto& row : rep.per_frame) {
    ssim_sum += row.ssim;
    cpbd_sum += row.cpbd;
    CHECK(row.ssim == doctest::Approx(metrics::metric_ssim(a.frames.frames[row.frame],
                                                           b.frames.frames[row.frame]))
                          .epsilon(1e-12));
  }
  CHECK(rep.ssim == doctest::Approx(ssim_sum / 8).epsilon(1e-12));
  CHECK(rep.cpbd == doctest::Approx(cpbd_sum / 8).epsilon(1e-12));

  // Self-evaluation: perfect similarity, zero landmark distance.
  metrics::EvaluateOptions self_opts;
  self_opts.landmarker = &lm;
  const metrics::MetricsReport self = metrics::evaluate_sequences(a.frames, a.frames, self_opts);
  CHECK(std::fabs(self.ssim - 1.0) <= 1e-9);
  CHECK(*self.lmd == 0.0);
  CHECK_FALSE(self.lsec_local.has_value());
  CHECK(self.per_frame.empty());

  // JSON round trip preserves every field.
  const std::string text = rep.to_json();
  const metrics::MetricsReport back = metrics::MetricsReport::from_json(text);
  CHECK(back.ssim == rep.ssim);
  CHECK(back.cpbd == rep.cpbd);
  REQUIRE(back.lmd.has_value());
  REQUIRE(back.lsec_local.has_value());
  CHECK(*back.lmd == *rep.lmd);
  CHECK(*back.lsec_local == *rep.lsec_local);
  REQUIRE(back.per_frame.size() == rep.per_frame.size());
  CHECK(back.per_frame[3].ssim == rep.per_frame[3].ssim);
  CHECK(back.per_frame[3].lmd == rep.per_frame[3].lmd);

  // Minimal report: optional fields stay absent through the round trip.
  const metrics::MetricsReport minimal_back =
      metrics::MetricsReport::from_json(self.to_json());
  CHECK(minimal_back.lsec_local.has_value() == false);
  CHECK(minimal_back.per_frame.empty());

  // CSV: header plus one line per frame; trailing lmd column populated.
  const std::string csv = rep.per_frame_csv();
  CHECK(csv.rfind("frame,ssim,cpbd,lmd\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);

  CHECK_THROWS_AS(metrics::MetricsReport::from_json("{\"cpbd\": 1}"), ConfigError);
  CHECK_THROWS_AS(metrics::MetricsReport::from_json("not json"), ConfigError);

  // Sequence guards.
  media::FrameSequence empty;
  CHECK_THROWS_AS(metrics::evaluate_sequences(empty, empty, {}), EmptyInputError);
  media::FrameSequence shorter;
  shorter.frames.assign(a.frames.frames.begin(), a.frames.frames.begin() + 3);
  CHECK_THROWS_AS(metrics::evaluate_sequences(a.frames, shorter, {}), LengthError);
}
