#pragma once

#include <cstdint>
#include <vector>

#include "font/core/tensor.hpp"

namespace font::media {

using core::Tensor;

// A decoded clip: frames are H×W×3 row-major tensors with values in [0,1].
struct FrameSequence {
  std::vector<Tensor> frames;
  double fps = 25.0;

  int height() const { return frames.empty() ? 0 : frames[0].dim(0); }
  int width() const { return frames.empty() ? 0 : frames[0].dim(1); }
  int count() const { return static_cast<int>(frames.size()); }
  void validate() const;  // same shapes, fps > 0, pixels in [0,1]
};

// One 28x12 MFCC block: 28 cepstral coefficients over 12 consecutive 10 ms
// windows centered on the owning video frame.
struct AudioFeature {
  Tensor coeffs;  // {28, 12}
  int frame_index = 0;

  void validate() const;
};

// Rigid head pose: rotation (yaw/pitch/roll, radians), relative scale,
// translation in normalized image units.
struct PoseVector {
  double yaw = 0.0, pitch = 0.0, roll = 0.0;
  double scale = 1.0;
  double tx = 0.0, ty = 0.0;

  void validate() const;  // scale > 0, rotations in (-pi, pi]
  Tensor to_tensor() const;
  static PoseVector from_tensor(const Tensor& t);
};

using PoseSequence = std::vector<PoseVector>;

// Motion program for one rendered clip. When pose_program / mouth_program are
// non-empty they override the seeded random trajectories and must contain one
// entry per frame.
struct SynthSpec {
  int frames = 50;
  int size = 48;
  int n_keypoints = 10;
  double fps = 25.0;
  // Amplitudes of the random motion program.
  double yaw_amp = 0.35;
  double pitch_amp = 0.20;
  double roll_amp = 0.20;
  double scale_amp = 0.08;   // on log-scale
  double trans_amp = 0.12;
  std::vector<PoseVector> pose_program;
  std::vector<double> mouth_program;  // mouth openness in [0,1]
};

// Fully labeled synthetic clip: every quantity the pipeline ever predicts is
// known exactly by construction.
struct SyntheticClip {
  FrameSequence frames;
  PoseSequence poses;
  std::vector<Tensor> gt_keypoints;  // per frame {N, 2}, (x, y) in [-1,1]
  std::vector<Tensor> gt_jacobians;  // per frame {N, 2, 2}, det > 0
  std::vector<AudioFeature> audio_features;
  std::vector<double> mouth;          // per-frame mouth openness in [0,1]
  std::vector<double> audio_samples;  // 16 kHz mono companion waveform
  int seed = 0;

  int count() const { return frames.count(); }
  void validate() const;
};

}  // namespace font::media
