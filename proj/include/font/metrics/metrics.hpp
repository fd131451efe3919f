#pragma once

// Evaluation metrics for generated video: windowed structural similarity,
// an edge-based sharpness score, landmark distance, and a local audio-visual
// sync confidence computed with the trained sync embedder. All metrics are
// pure functions of their inputs.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "font/core/tensor.hpp"
#include "font/flowgen/sync.hpp"
#include "font/media/types.hpp"

namespace font::metrics {

using core::Tensor;

// Maps a frame {h,w,3} to landmarks {N,2} with coordinates in [-1,1].
// Bindings in use: ground-truth lookup on synthetic clips, the trained
// teacher detector, and pose-projected canonical landmarks.
using Landmarker = std::function<Tensor(const Tensor& frame_hwc)>;

// Per-frame breakdown row. `lmd` is only meaningful when the owning report
// has a landmark metric (has_lmd).
struct FrameMetricsRow {
  int frame = 0;
  double ssim = 0.0;
  double cpbd = 0.0;
  double lmd = 0.0;
};

struct MetricsReport {
  double ssim = 0.0;                      // mean windowed SSIM, <= 1
  double cpbd = 0.0;                      // sharpness in [0, 1]
  std::optional<double> lmd;              // mean landmark distance, >= 0
  std::optional<double> lsec_local;       // mean windowed sync cosine
  std::vector<FrameMetricsRow> per_frame; // optional breakdown

  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
  // CSV with header "frame,ssim,cpbd,lmd"; the lmd column is empty when the
  // report has no landmark metric.
  std::string per_frame_csv() const;
};

// Mean structural similarity over all 11x11 sigma-1.5 gaussian windows of the
// valid region, constants C1=1e-4 / C2=9e-4 for unit-range intensities.
// Inputs are {h,w} grayscale or {h,w,3} color (converted to Rec.601 luma);
// both must have the same shape and be at least 11x11.
double metric_ssim(const Tensor& a, const Tensor& b);

// Cumulative probability of blur detection: the fraction of measured edges
// whose blur probability 1 - exp(-(width/w_jnb)^3.6) stays at or below the
// just-noticeable point 1 - exp(-1). Edge pixels are row-local maxima of the
// horizontal Sobel magnitude above 0.1x its global maximum, kept only inside
// 64x64 blocks whose edge density exceeds 0.2%. Widths follow the standard
// row-trace rule (distance between the local intensity extrema flanking the
// edge); w_jnb is 5 for edge contrast <= 50 (8-bit units) and 3 otherwise.
// An image with no measurable edges scores 0. Higher = sharper; range [0,1].
double metric_cpbd(const Tensor& img);

// Mean Euclidean distance between corresponding landmarks, averaged over
// every (frame, landmark) pair. Each element is a {N,2} tensor; paired
// frames must agree on N. Coordinates are normalized [-1,1] units.
double metric_lmd(const std::vector<Tensor>& gen_landmarks,
                  const std::vector<Tensor>& ref_landmarks);

// Same distance computed by running the landmarker on both sequences. A
// throwing landmarker is reported as EstimatorError with the frame index.
double metric_lmd(const media::FrameSequence& gen, const media::FrameSequence& ref,
                  const Landmarker& landmarker);

// Mean cosine between video and audio embeddings over all length-W sliding
// windows (stride 1). Requires one audio block per frame and at least W
// frames, where W is the embedder's window.
double metric_lsec(const media::FrameSequence& gen,
                   const std::vector<media::AudioFeature>& audio,
                   const flowgen::SyncEmbedder& embedder);

// Assembles a full report for a generated/reference pair. ssim and cpbd are
// always computed (means over frames; cpbd on the generated frames). lmd is
// filled when a landmarker is supplied, lsec_local when both audio and an
// embedder are supplied. with_per_frame adds the per-frame breakdown.
struct EvaluateOptions {
  const Landmarker* landmarker = nullptr;
  const std::vector<media::AudioFeature>* audio = nullptr;
  const flowgen::SyncEmbedder* embedder = nullptr;
  bool with_per_frame = false;
};

MetricsReport evaluate_sequences(const media::FrameSequence& gen,
                                 const media::FrameSequence& ref,
                                 const EvaluateOptions& opts = {});

}  // namespace font::metrics
