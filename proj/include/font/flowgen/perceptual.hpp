#pragma once

#include <memory>
#include <string>
#include <vector>

#include "font/core/archive.hpp"
#include "font/core/autodiff.hpp"
#include "font/core/tensor.hpp"
#include "font/media/types.hpp"
#include "font/nn/layers.hpp"

namespace font::flowgen {

using core::Tensor;

// Supplies the tap activations the perceptual loss compares. Implementations
// must be deterministic functions of the image.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  // img is {3, h, w}; returns one Var per tap layer, shallow to deep.
  virtual std::vector<ad::Var> taps(const ad::Var& img) const = 0;
  virtual std::string name() const = 0;
};

// Degenerate extractor whose single tap is the image itself, so the
// perceptual loss reduces to mean absolute pixel difference.
class IdentityExtractor : public FeatureExtractor {
 public:
  std::vector<ad::Var> taps(const ad::Var& img) const override { return {img}; }
  std::string name() const override { return "identity"; }
};

struct ConvExtractorConfig {
  int base_channels = 12;
  int n_taps = 3;  // 1..3 conv activations are exposed as taps
  unsigned long long init_seed = 0xfea7;
};

// Small convolutional autoencoder; the first n_taps encoder activations are
// the perceptual taps. Trained by L1 self-reconstruction on a frame corpus.
class ConvFeatureExtractor : public FeatureExtractor {
 public:
  explicit ConvFeatureExtractor(const ConvExtractorConfig& cfg);

  std::vector<ad::Var> taps(const ad::Var& img) const override;
  std::string name() const override { return "conv-autoencoder"; }

  const ConvExtractorConfig& config() const { return cfg_; }

  // Full autoencoder pass used in training; img {3, h, w} with h, w
  // divisible by 4.
  ad::Var reconstruct(const ad::Var& img) const;

  nn::ParamMap params() const;

  core::Archive to_archive() const;
  void save(const std::string& path) const;
  static ConvFeatureExtractor from_archive(const core::Archive& ar);
  static ConvFeatureExtractor load(const std::string& path);

 private:
  ConvExtractorConfig cfg_;
  nn::Conv2d e0_, e1_, e2_;  // taps
  nn::Conv2d d0_, d1_;       // reconstruction head (training only)
};

// Sum over tap layers of the mean absolute feature difference. Images are
// {h, w, 3} in the value overload and {3, h, w} Vars in the graph overload;
// shapes must match (ShapeError otherwise).
double perceptual_loss(const Tensor& gen, const Tensor& ref, const FeatureExtractor& fx);
ad::Var perceptual_loss(const ad::Var& gen_chw, const ad::Var& ref_chw,
                        const FeatureExtractor& fx);

struct ExtractorTrainTrace {
  std::vector<double> loss;  // per-step reconstruction loss
};

// Trains the autoencoder on frames drawn from the clips (L1 reconstruction,
// Adam). Deterministic for a fixed seed. Throws EmptyInputError when no
// frames are supplied.
ExtractorTrainTrace train_feature_extractor(ConvFeatureExtractor& fx,
                                            const std::vector<media::FrameSequence>& clips,
                                            int steps, int batch, double lr,
                                            unsigned long long seed);

}  // namespace font::flowgen
