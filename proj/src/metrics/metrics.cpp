#include "font/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "font/core/errors.hpp"
#include "font/kernels/kernels.hpp"

#include "json.hpp"

namespace font::metrics {

using nlohmann::json;

namespace {

constexpr double kSsimC1 = 1e-4;
constexpr double kSsimC2 = 9e-4;

// Rec.601 luma; accepts {h,w} as-is.
Tensor to_gray(const Tensor& img, const char* who) {
  if (img.ndim() == 2) return img;
  if (img.ndim() == 3 && img.dim(2) == 3) {
    const int h = img.dim(0), w = img.dim(1);
    Tensor g({h, w});
    const double* p = img.data();
    double* o = g.data();
    for (int i = 0; i < h * w; ++i)
      o[i] = 0.299 * p[3 * i] + 0.587 * p[3 * i + 1] + 0.114 * p[3 * i + 2];
    return g;
  }
  throw ShapeError(std::string(who) + ": expected {h,w} or {h,w,3}, got " +
                   core::shape_str(img.shape()));
}

double mean_landmark_distance(const Tensor& a, const Tensor& b, int frame, double* out_sum,
                              long long* out_count) {
  if (a.ndim() != 2 || a.dim(1) != 2)
    throw ShapeError("landmarks for frame " + std::to_string(frame) + " must be {N,2}, got " +
                     core::shape_str(a.shape()));
  if (!(a.shape() == b.shape()))
    throw ShapeError("landmark count mismatch at frame " + std::to_string(frame) + ": " +
                     core::shape_str(a.shape()) + " vs " + core::shape_str(b.shape()));
  const int n = a.dim(0);
  if (n == 0) throw EmptyInputError("frame " + std::to_string(frame) + " has no landmarks");
  double sum = 0.0;
  for (int k = 0; k < n; ++k) {
    const double dx = a.at(k, 0) - b.at(k, 0);
    const double dy = a.at(k, 1) - b.at(k, 1);
    sum += std::sqrt(dx * dx + dy * dy);
  }
  *out_sum += sum;
  *out_count += n;
  return sum / n;
}

Tensor run_landmarker(const Landmarker& lm, const Tensor& frame, int index) {
  try {
    return lm(frame);
  } catch (const EstimatorError&) {
    throw;
  } catch (const std::exception& e) {
    throw EstimatorError(e.what(), index);
  }
}

}  // namespace

double metric_ssim(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape()))
    throw ShapeError("metric_ssim: " + core::shape_str(a.shape()) + " vs " +
                     core::shape_str(b.shape()));
  const Tensor ga = to_gray(a, "metric_ssim");
  const Tensor gb = to_gray(b, "metric_ssim");
  const int h = ga.dim(0), w = ga.dim(1);
  if (h < 11 || w < 11)
    throw ShapeError("metric_ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                     " is smaller than the 11x11 window");
  const int hv = h - 10, wv = w - 10;
  Tensor map({hv, wv});
  kernels::ssim_map(ga.data(), gb.data(), map.data(), h, w, kSsimC1, kSsimC2);
  double sum = 0.0;
  for (std::size_t i = 0; i < map.numel(); ++i) sum += map[i];
  return sum / static_cast<double>(map.numel());
}

double metric_cpbd(const Tensor& img) {
  const Tensor gray = to_gray(img, "metric_cpbd");
  const int h = gray.dim(0), w = gray.dim(1);
  if (h < 3 || w < 3) return 0.0;  // no interior pixels, so no measurable edges

  // Intensities in 8-bit units; the contrast lookup below is specified on
  // the 0..255 scale.
  std::vector<double> lum(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < lum.size(); ++i) lum[i] = gray[i] * 255.0;
  auto I = [&](int r, int c) { return lum[static_cast<std::size_t>(r) * w + c]; };

  // Horizontal Sobel magnitude on the interior (borders stay 0).
  std::vector<double> grad(lum.size(), 0.0);
  double gmax = 0.0;
  for (int r = 1; r < h - 1; ++r)
    for (int c = 1; c < w - 1; ++c) {
      const double gx = (I(r - 1, c + 1) + 2.0 * I(r, c + 1) + I(r + 1, c + 1)) -
                        (I(r - 1, c - 1) + 2.0 * I(r, c - 1) + I(r + 1, c - 1));
      const double m = std::abs(gx);
      grad[static_cast<std::size_t>(r) * w + c] = m;
      gmax = std::max(gmax, m);
    }
  if (gmax <= 0.0) return 0.0;
  const double thresh = 0.1 * gmax;
  auto G = [&](int r, int c) { return grad[static_cast<std::size_t>(r) * w + c]; };

  // Edge pixels: row-local maxima of the gradient magnitude above threshold.
  std::vector<char> edge(lum.size(), 0);
  for (int r = 1; r < h - 1; ++r)
    for (int c = 1; c < w - 1; ++c)
      if (G(r, c) > thresh && G(r, c) >= G(r, c - 1) && G(r, c) >= G(r, c + 1))
        edge[static_cast<std::size_t>(r) * w + c] = 1;

  // Keep only edge pixels inside 64x64 blocks whose edge density > 0.2%.
  constexpr int kBlock = 64;
  constexpr double kDensity = 0.002;
  long long below = 0, total = 0;
  for (int br = 0; br < h; br += kBlock)
    for (int bc = 0; bc < w; bc += kBlock) {
      const int r1 = std::min(br + kBlock, h), c1 = std::min(bc + kBlock, w);
      long long count = 0;
      for (int r = br; r < r1; ++r)
        for (int c = bc; c < c1; ++c) count += edge[static_cast<std::size_t>(r) * w + c];
      const double pixels = static_cast<double>(r1 - br) * (c1 - bc);
      if (static_cast<double>(count) <= kDensity * pixels) continue;

      for (int r = br; r < r1; ++r)
        for (int c = bc; c < c1; ++c) {
          if (!edge[static_cast<std::size_t>(r) * w + c]) continue;
          // Trace the monotone intensity run flanking the edge along its row.
          const bool rising = I(r, c + 1) >= I(r, c - 1);
          int j = c, k = c;
          if (rising) {
            while (j > 0 && I(r, j - 1) < I(r, j)) --j;
            while (k < w - 1 && I(r, k + 1) > I(r, k)) ++k;
          } else {
            while (j > 0 && I(r, j - 1) > I(r, j)) --j;
            while (k < w - 1 && I(r, k + 1) < I(r, k)) ++k;
          }
          const int width = k - j;
          if (width == 0) continue;  // plateau-locked pixel, no measurable width
          const double contrast = std::abs(I(r, k) - I(r, j));
          const double w_jnb = contrast <= 50.0 ? 5.0 : 3.0;
          const double p_blur = 1.0 - std::exp(-std::pow(width / w_jnb, 3.6));
          ++total;
          if (p_blur <= 1.0 - std::exp(-1.0)) ++below;
        }
    }
  if (total == 0) return 0.0;
  return static_cast<double>(below) / static_cast<double>(total);
}

double metric_lmd(const std::vector<Tensor>& gen_landmarks,
                  const std::vector<Tensor>& ref_landmarks) {
  if (gen_landmarks.size() != ref_landmarks.size())
    throw LengthError("metric_lmd: " + std::to_string(gen_landmarks.size()) + " vs " +
                      std::to_string(ref_landmarks.size()) + " frames");
  if (gen_landmarks.empty()) throw EmptyInputError("metric_lmd: no frames");
  double sum = 0.0;
  long long count = 0;
  for (std::size_t i = 0; i < gen_landmarks.size(); ++i)
    mean_landmark_distance(gen_landmarks[i], ref_landmarks[i], static_cast<int>(i), &sum, &count);
  return sum / static_cast<double>(count);
}

double metric_lmd(const media::FrameSequence& gen, const media::FrameSequence& ref,
                  const Landmarker& landmarker) {
  if (gen.count() != ref.count())
    throw LengthError("metric_lmd: " + std::to_string(gen.count()) + " vs " +
                      std::to_string(ref.count()) + " frames");
  if (gen.count() == 0) throw EmptyInputError("metric_lmd: no frames");
  std::vector<Tensor> a, b;
  a.reserve(gen.frames.size());
  b.reserve(ref.frames.size());
  for (int i = 0; i < gen.count(); ++i) {
    a.push_back(run_landmarker(landmarker, gen.frames[i], i));
    b.push_back(run_landmarker(landmarker, ref.frames[i], i));
  }
  return metric_lmd(a, b);
}

double metric_lsec(const media::FrameSequence& gen,
                   const std::vector<media::AudioFeature>& audio,
                   const flowgen::SyncEmbedder& embedder) {
  const int window = embedder.config().window;
  if (gen.count() != static_cast<int>(audio.size()))
    throw LengthError("metric_lsec: " + std::to_string(gen.count()) + " frames vs " +
                      std::to_string(audio.size()) + " audio blocks");
  if (gen.count() < window)
    throw LengthError("metric_lsec: sequence of " + std::to_string(gen.count()) +
                      " frames is shorter than the window " + std::to_string(window));
  double sum = 0.0;
  int n = 0;
  for (int s = 0; s + window <= gen.count(); ++s) {
    std::vector<Tensor> fw(gen.frames.begin() + s, gen.frames.begin() + s + window);
    std::vector<media::AudioFeature> aw(audio.begin() + s, audio.begin() + s + window);
    sum += flowgen::sync_score(embedder, fw, aw);
    ++n;
  }
  return sum / n;
}

MetricsReport evaluate_sequences(const media::FrameSequence& gen,
                                 const media::FrameSequence& ref,
                                 const EvaluateOptions& opts) {
  if (gen.count() != ref.count())
    throw LengthError("evaluate: " + std::to_string(gen.count()) + " generated vs " +
                      std::to_string(ref.count()) + " reference frames");
  if (gen.count() == 0) throw EmptyInputError("evaluate: no frames");

  MetricsReport rep;
  const int n = gen.count();
  std::vector<FrameMetricsRow> rows(n);
  double ssim_sum = 0.0, cpbd_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    rows[i].frame = i;
    rows[i].ssim = metric_ssim(gen.frames[i], ref.frames[i]);
    rows[i].cpbd = metric_cpbd(gen.frames[i]);
    ssim_sum += rows[i].ssim;
    cpbd_sum += rows[i].cpbd;
  }
  rep.ssim = ssim_sum / n;
  rep.cpbd = cpbd_sum / n;

  if (opts.landmarker) {
    double sum = 0.0;
    long long count = 0;
    for (int i = 0; i < n; ++i) {
      const Tensor a = run_landmarker(*opts.landmarker, gen.frames[i], i);
      const Tensor b = run_landmarker(*opts.landmarker, ref.frames[i], i);
      rows[i].lmd = mean_landmark_distance(a, b, i, &sum, &count);
    }
    rep.lmd = sum / static_cast<double>(count);
  }
  if (opts.audio && opts.embedder) rep.lsec_local = metric_lsec(gen, *opts.audio, *opts.embedder);
  if (opts.with_per_frame) rep.per_frame = std::move(rows);
  return rep;
}

std::string MetricsReport::to_json() const {
  json j;
  j["ssim"] = ssim;
  j["cpbd"] = cpbd;
  if (lmd) j["lmd"] = *lmd;
  if (lsec_local) j["lsec_local"] = *lsec_local;
  if (!per_frame.empty()) {
    json rows = json::array();
    for (const auto& r : per_frame) {
      json row;
      row["frame"] = r.frame;
      row["ssim"] = r.ssim;
      row["cpbd"] = r.cpbd;
      if (lmd) row["lmd"] = r.lmd;
      rows.push_back(row);
    }
    j["per_frame"] = rows;
  }
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  MetricsReport rep;
  try {
    json j = json::parse(text);
    rep.ssim = j.at("ssim").get<double>();
    rep.cpbd = j.at("cpbd").get<double>();
    if (j.contains("lmd")) rep.lmd = j["lmd"].get<double>();
    if (j.contains("lsec_local")) rep.lsec_local = j["lsec_local"].get<double>();
    if (j.contains("per_frame")) {
      for (const auto& row : j["per_frame"]) {
        FrameMetricsRow r;
        r.frame = row.at("frame").get<int>();
        r.ssim = row.at("ssim").get<double>();
        r.cpbd = row.at("cpbd").get<double>();
        r.lmd = row.value("lmd", 0.0);
        rep.per_frame.push_back(r);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("metrics report: ") + e.what());
  }
  return rep;
}

std::string MetricsReport::per_frame_csv() const {
  std::ostringstream out;
  out << "frame,ssim,cpbd,lmd\n";
  out.precision(17);
  for (const auto& r : per_frame) {
    out << r.frame << ',' << r.ssim << ',' << r.cpbd << ',';
    if (lmd) out << r.lmd;
    out << '\n';
  }
  return out.str();
}

}  // namespace font::metrics
