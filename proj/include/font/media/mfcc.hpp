#pragma once

#include <vector>

#include "font/media/types.hpp"

namespace font::media {

// MFCC layout constants. One 28-row block per 25 fps video frame covers
// twelve 10 ms analysis windows (120 ms of context) centered on the frame:
// window w of frame t starts at sample 640*t - 640 + 160*w; samples outside
// the signal are zero. Each window is Hann-weighted, zero-padded to a 256-pt
// FFT, run through a 40-band triangular mel filterbank (0..8 kHz, HTK mel
// scale), floored log, then reduced to 28 orthonormal DCT-II coefficients.
inline constexpr int kSampleRate = 16000;
inline constexpr int kHop = 160;          // 10 ms
inline constexpr int kWindow = 160;       // 10 ms
inline constexpr int kFftSize = 256;
inline constexpr int kMelBands = 40;
inline constexpr int kMfccCoeffs = 28;
inline constexpr int kMfccCols = 12;
inline constexpr double kLogFloor = 1e-10;
inline constexpr int kSamplesPerFrame = 640;  // 16 kHz / 25 fps

// samples: 16 kHz mono in [-1,1]. Requires samples.size() >= n_frames*640.
std::vector<AudioFeature> compute_mfcc(const std::vector<double>& samples, int n_frames);

}  // namespace font::media
