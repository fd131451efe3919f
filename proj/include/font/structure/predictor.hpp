#pragma once

// Audio/pose-driven structure predictor: recurrently maps (source image,
// per-frame audio features, per-frame poses) to per-frame keypoints and
// Jacobians, trained by L1 distillation against a teacher detector.

#include <string>
#include <utility>
#include <vector>

#include "font/core/archive.hpp"
#include "font/core/autodiff.hpp"
#include "font/media/types.hpp"
#include "font/nn/layers.hpp"
#include "font/structure/teacher.hpp"

namespace font::structure {

using media::AudioFeature;
using media::PoseSequence;

struct KeypointPredictorConfig {
  int n_keypoints = 10;
  int hidden = 256;    // recurrent state width
  int img_dim = 128;   // source image embedding
  int aud_dim = 64;    // per-frame audio embedding
  int pose_dim = 32;   // per-frame pose embedding
  int mfcc_coeffs = 28;
  int mfcc_cols = 12;
  std::string pose_input = "absolute";  // "absolute" | "delta"
  std::string teacher = "oracle";       // "oracle" | "trained:<ckpt>"
  unsigned long long init_seed = 0x9b3f;

  std::string to_json() const;
  static KeypointPredictorConfig from_json(const std::string& text);
};

class KeypointPredictorModel {
 public:
  KeypointPredictorModel() : KeypointPredictorModel(KeypointPredictorConfig{}) {}
  explicit KeypointPredictorModel(const KeypointPredictorConfig& cfg);

  const KeypointPredictorConfig& config() const { return cfg_; }

  // Differentiable rollout over n frames; one (keypoints, jacobians) pair
  // per frame. Lengths of audio and poses must match and be >= 1.
  std::vector<std::pair<Var, Var>> predict_vars(const Tensor& src_img,
                                                const std::vector<AudioFeature>& audio,
                                                const PoseSequence& poses) const;

  nn::ParamMap params() const;
  void save(const std::string& path) const;
  static KeypointPredictorModel load(const std::string& path);
  core::Archive to_archive() const;
  static KeypointPredictorModel from_archive(const core::Archive& ar);

 private:
  KeypointPredictorConfig cfg_;
  nn::Conv2d img_c0_, img_c1_, img_c2_;
  nn::Linear img_fc_;
  nn::Linear aud_l0_, aud_l1_;
  nn::Linear pose_l0_, pose_l1_;
  nn::LstmCell lstm_;
  nn::Linear kp_head_, jac_head_;
};

// Value-level rollout: n StructureReps, deterministic per inputs.
std::vector<StructureRep> predict_driving(const KeypointPredictorModel& model,
                                          const Tensor& src_img,
                                          const std::vector<AudioFeature>& audio,
                                          const PoseSequence& poses);

// Distillation objective: mean over frames of
//   (1/N) * (sum |dK| + sum |dJ|).
Var distill_loss(const std::vector<std::pair<Var, Var>>& pred,
                 const std::vector<StructureRep>& target);
double distill_loss(const std::vector<StructureRep>& pred,
                    const std::vector<StructureRep>& target);

}  // namespace font::structure
