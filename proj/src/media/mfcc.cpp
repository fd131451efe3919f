#include "font/media/mfcc.hpp"

#include <cmath>

#include "font/core/errors.hpp"
#include "font/kernels/kernels.hpp"

namespace font::media {

namespace {

constexpr int kBins = kFftSize / 2 + 1;

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular mel filterbank as a dense [kMelBands, kBins] weight matrix.
const std::vector<double>& mel_bank() {
  static const std::vector<double> bank = [] {
    std::vector<double> wts(static_cast<std::size_t>(kMelBands) * kBins, 0.0);
    const double mel_hi = hz_to_mel(kSampleRate / 2.0);
    std::vector<double> edges(kMelBands + 2);
    for (int i = 0; i < kMelBands + 2; ++i)
      edges[i] = mel_to_hz(mel_hi * i / (kMelBands + 1));
    for (int m = 0; m < kMelBands; ++m) {
      const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
      for (int k = 0; k < kBins; ++k) {
        const double f = static_cast<double>(k) * kSampleRate / kFftSize;
        double w = 0.0;
        if (f > lo && f < mid) w = (f - lo) / (mid - lo);
        else if (f >= mid && f < hi) w = (hi - f) / (hi - mid);
        wts[static_cast<std::size_t>(m) * kBins + k] = w;
      }
    }
    return wts;
  }();
  return bank;
}

const std::vector<double>& hann() {
  static const std::vector<double> win = [] {
    std::vector<double> w(kWindow);
    for (int n = 0; n < kWindow; ++n)
      w[n] = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / kWindow);
    return w;
  }();
  return win;
}

// Orthonormal DCT-II matrix [kMfccCoeffs, kMelBands].
const std::vector<double>& dct_matrix() {
  static const std::vector<double> mat = [] {
    std::vector<double> m(static_cast<std::size_t>(kMfccCoeffs) * kMelBands);
    for (int r = 0; r < kMfccCoeffs; ++r) {
      const double scale = std::sqrt((r == 0 ? 1.0 : 2.0) / kMelBands);
      for (int c = 0; c < kMelBands; ++c)
        m[static_cast<std::size_t>(r) * kMelBands + c] =
            scale * std::cos(M_PI * r * (c + 0.5) / kMelBands);
    }
    return m;
  }();
  return mat;
}

}  // namespace

std::vector<AudioFeature> compute_mfcc(const std::vector<double>& samples, int n_frames) {
  if (n_frames <= 0) throw EmptyInputError("mfcc: n_frames must be positive");
  if (samples.size() < static_cast<std::size_t>(n_frames) * kSamplesPerFrame)
    throw LengthError("mfcc: audio shorter than n_frames/25 seconds (" +
                      std::to_string(samples.size()) + " samples for " +
                      std::to_string(n_frames) + " frames)");

  const std::vector<double>& win = hann();
  const std::vector<double>& bank = mel_bank();
  const std::vector<double>& dct = dct_matrix();

  std::vector<AudioFeature> out;
  out.reserve(static_cast<std::size_t>(n_frames));
  std::vector<double> frames_buf(static_cast<std::size_t>(kMfccCols) * kFftSize);
  std::vector<double> pows(static_cast<std::size_t>(kMfccCols) * kBins);

  for (int t = 0; t < n_frames; ++t) {
    std::fill(frames_buf.begin(), frames_buf.end(), 0.0);
    for (int w = 0; w < kMfccCols; ++w) {
      const long start = static_cast<long>(t) * kSamplesPerFrame - kSamplesPerFrame +
                         static_cast<long>(w) * kHop;
      double* dst = frames_buf.data() + static_cast<std::size_t>(w) * kFftSize;
      for (int n = 0; n < kWindow; ++n) {
        const long idx = start + n;
        const double s =
            (idx >= 0 && idx < static_cast<long>(samples.size())) ? samples[idx] : 0.0;
        dst[n] = s * win[n];
      }
    }
    kernels::power_spectrum(frames_buf.data(), pows.data(), kMfccCols, kFftSize);

    AudioFeature feat;
    feat.frame_index = t;
    feat.coeffs = Tensor({kMfccCoeffs, kMfccCols});
    for (int w = 0; w < kMfccCols; ++w) {
      double logmel[kMelBands];
      for (int m = 0; m < kMelBands; ++m) {
        double e = 0.0;
        const double* bw = bank.data() + static_cast<std::size_t>(m) * kBins;
        const double* pw = pows.data() + static_cast<std::size_t>(w) * kBins;
        for (int k = 0; k < kBins; ++k) e += bw[k] * pw[k];
        logmel[m] = std::log(std::max(e, kLogFloor));
      }
      for (int r = 0; r < kMfccCoeffs; ++r) {
        double c = 0.0;
        const double* dr = dct.data() + static_cast<std::size_t>(r) * kMelBands;
        for (int m = 0; m < kMelBands; ++m) c += dr[m] * logmel[m];
        feat.coeffs.at(r, w) = c;
      }
    }
    out.push_back(std::move(feat));
  }
  return out;
}

}  // namespace font::media
