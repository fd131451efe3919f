#pragma once

#include <string>
#include <vector>

#include "font/core/archive.hpp"
#include "font/core/autodiff.hpp"
#include "font/core/rng.hpp"
#include "font/core/tensor.hpp"
#include "font/media/types.hpp"

#include "font/nn/layers.hpp"

namespace font::flowgen {

using core::Tensor;

struct SyncEmbedderConfig {
  int window = 5;        // frames / audio blocks per embedding
  int embed_dim = 64;
  int base_channels = 12;
  int mfcc_coeffs = 28;
  int mfcc_cols = 12;
  unsigned long long init_seed = 0x57bc;

  std::string to_json() const;
  static SyncEmbedderConfig from_json(const std::string& text);
};

// Two-tower embedder for audio-visual synchrony: one tower embeds a window of
// consecutive frames, the other the matching window of MFCC blocks. Trained
// contrastively so that in-sync pairs score a higher cosine than desynced
// ones.
class SyncEmbedder {
 public:
  explicit SyncEmbedder(const SyncEmbedderConfig& cfg);

  const SyncEmbedderConfig& config() const { return cfg_; }

  // frames: exactly cfg.window tensors {h, w, 3} of equal shape, at least
  // 8 pixels per side. Returns {embed_dim}.
  ad::Var embed_video(const std::vector<Tensor>& frames) const;
  // Differentiable variant: gradients flow into the frame Vars. Used when a
  // frozen embedder shapes the frames that feed it (generator fine-tuning).
  ad::Var embed_video(const std::vector<ad::Var>& frames) const;
  // feats: exactly cfg.window MFCC blocks {mfcc_coeffs, mfcc_cols}.
  ad::Var embed_audio(const std::vector<media::AudioFeature>& feats) const;

  nn::ParamMap params() const;

  core::Archive to_archive() const;
  void save(const std::string& path) const;
  static SyncEmbedder from_archive(const core::Archive& ar);
  static SyncEmbedder load(const std::string& path);

 private:
  SyncEmbedderConfig cfg_;
  nn::Conv2d vid_c0_, vid_c1_, vid_c2_;
  nn::Linear vid_fc_;
  nn::Linear aud_l0_, aud_l1_;
};

// Cosine similarity between two equal-length embeddings with the denominator
// clamped at 1e-8; always lands in [-1, 1].
ad::Var sync_cosine(const ad::Var& v, const ad::Var& a);
double sync_cosine(const Tensor& v, const Tensor& a);

// Convenience: embed both windows and return their cosine.
double sync_score(const SyncEmbedder& embedder, const std::vector<Tensor>& frames,
                  const std::vector<media::AudioFeature>& feats);

struct SyncTrainConfig {
  int steps = 1500;
  int batch = 4;  // contrastive pairs averaged per update
  double lr = 1e-3;
  double hinge_margin = 0.6;
  int min_shift = 5;  // desynced pairs are offset by at least this many frames
  unsigned long long seed = 7;
};

struct SyncTrainTrace {
  std::vector<double> loss;
};

// Contrastive training on the clip corpus: each step draws an in-sync
// window and a window whose audio is shifted by >= min_shift frames, and
// minimizes a hinge on the cosine gap. Requires at least 50 clips
// (InsufficientDataError otherwise) and clips long enough to hold a shifted
// window (LengthError). Deterministic for a fixed config.
SyncTrainTrace train_sync_embedder(SyncEmbedder& embedder,
                                   const std::vector<media::SyntheticClip>& clips,
                                   const SyncTrainConfig& cfg);

}  // namespace font::flowgen
