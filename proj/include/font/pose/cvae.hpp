#pragma once

// Probabilistic head-pose sequence model. A conditional VAE generates
// fixed-length clips of pose deltas (clip length t, six pose channels)
// conditioned on a source image embedding and a per-clip audio embedding;
// a small temporal-conv discriminator scores delta sequences for
// adversarial sharpening. For the no-latent ablation the decoder is
// swapped for a deterministic recurrent (LSTM) decoder of matched
// capacity consuming the same conditions.

#include <string>
#include <utility>
#include <vector>

#include "font/core/archive.hpp"
#include "font/core/autodiff.hpp"
#include "font/core/rng.hpp"
#include "font/core/tensor.hpp"
#include "font/media/ingest.hpp"
#include "font/media/types.hpp"
#include "font/nn/layers.hpp"

namespace font::pose {

using ad::Var;
using core::Rng;
using core::Tensor;
using media::AudioFeature;
using media::PoseSequence;
using media::PoseVector;

// Diagonal Gaussian over the latent code, parameterized by the encoder.
struct LatentDist {
  Var mu;       // {d_z}
  Var log_var;  // {d_z}
};

struct PoseCvaeConfig {
  int d_z = 16;      // latent width
  int t = 25;        // clip length in frames (one second at 25 fps)
  int hidden = 128;  // encoder/decoder MLP width
  int cond_dim = 64; // width of each condition embedding
  int mfcc_coeffs = 28;
  int mfcc_cols = 12;
  double lambda_recon = 1.0;  // reconstruction weight
  double lambda_kl = 0.01;    // KL weight after warm-up
  double lambda_adv = 0.1;    // adversarial weight
  bool use_vae = true;        // false: deterministic recurrent decoder
  std::string recon = "ssim"; // reconstruction loss: "ssim" | "l1"
  unsigned long long init_seed = 0x7a11;

  std::string to_json() const;
  static PoseCvaeConfig from_json(const std::string& text);
};

class PoseCvaeModel {
 public:
  PoseCvaeModel() : PoseCvaeModel(PoseCvaeConfig{}) {}
  explicit PoseCvaeModel(const PoseCvaeConfig& cfg);

  const PoseCvaeConfig& config() const { return cfg_; }

  // Condition embeddings. The image encoder pools globally, so any square
  // HWC image with 3 channels is accepted; the audio encoder needs exactly
  // t feature blocks.
  Var embed_image(const Tensor& img_hwc) const;
  Var embed_audio(const std::vector<AudioFeature>& feats) const;

  // Posterior over z given a delta clip and its conditions.
  LatentDist encode(const Var& deltas, const Var& cond_img, const Var& cond_audio) const;

  // Decode a latent into a {t, 6} delta clip whose first row is exactly 0.
  Var decode(const Var& z, const Var& cond_img, const Var& cond_audio) const;

  // No-latent ablation path: recurrent decoder on the conditions alone.
  Var decode_deterministic(const Var& cond_img, const Var& cond_audio) const;

  // Realism score for a {t, 6} delta clip, strictly inside (0, 1).
  Var discriminate(const Var& deltas) const;

  nn::ParamMap params() const;                // every trainable tensor
  nn::ParamMap generator_params() const;      // everything but the discriminator
  nn::ParamMap discriminator_params() const;

  void save(const std::string& path) const;
  static PoseCvaeModel load(const std::string& path);
  core::Archive to_archive() const;
  static PoseCvaeModel from_archive(const core::Archive& ar);

 private:
  PoseCvaeConfig cfg_;

  nn::Conv2d img_c0_, img_c1_, img_c2_;
  nn::Linear img_fc_;
  nn::Conv1d aud_c0_, aud_c1_;
  nn::Linear aud_fc_;
  nn::Linear enc_l0_, enc_l1_, enc_l2_;
  nn::Linear dec_l0_, dec_l1_, dec_l2_;  // VAE decoder MLP
  nn::LstmCell det_lstm_;                // deterministic decoder
  nn::Linear det_head_;
  nn::Conv1d disc_c0_, disc_c1_;
  nn::Linear disc_fc_;
};

// Split a pose sequence into its first pose and per-frame deltas ({T, 6},
// row 0 all zero). Deltas are nudged by at most a few ulp so that
// delta_to_pose reproduces the source sequence bitwise.
std::pair<PoseVector, Tensor> pose_to_delta(const PoseSequence& seq);

// Rebuild absolute poses: poses[k] = initial + deltas[k].
PoseSequence delta_to_pose(const Tensor& deltas, const PoseVector& initial);

// z = mu + exp(0.5 * log_var) * eps with eps drawn from the given stream.
// Gradients flow through mu and log_var only.
Var reparameterize(const LatentDist& dist, Rng& rng);
Var reparameterize(const LatentDist& dist, unsigned long long seed);

// Autoregressive clip-chained synthesis: the audio is split into
// ceil(n / t) clips (the last right-padded by repeating its final block,
// outputs truncated to n), each clip decodes an independently sampled
// prior z, and each clip's deltas are added onto the last assembled pose
// (clip 0 onto the initial pose). Deterministic for a fixed seed.
PoseSequence infer_pose_sequence(const PoseCvaeModel& model, const Tensor& src_img,
                                 const std::vector<AudioFeature>& audio,
                                 const PoseVector& initial, unsigned long long seed);

// Same, resolving the initial pose by running the estimator on src_img.
PoseSequence infer_pose_sequence(const PoseCvaeModel& model, const Tensor& src_img,
                                 const std::vector<AudioFeature>& audio,
                                 media::PoseEstimator& estimator, unsigned long long seed);

}  // namespace font::pose
