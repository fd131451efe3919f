#pragma once

#include "font/core/rng.hpp"
#include "font/media/types.hpp"

namespace font::media {

// Stylized-face renderer with exact ground truth.
//
// Geometry lives in a canonical space q in [-1,1]^2 (y down). Each frame
// applies two maps:
//   1. a mouth-opening deformation D_m: y-coordinates scale by (1 + beta*m)
//      around the mouth center inside an elliptical influence region, with a
//      smoothstep falloff band. Landmarks sit either in the inner plateau
//      (exactly affine: diag(1, 1+beta*m)) or fully outside the band
//      (exactly identity), so per-landmark Jacobians are closed-form.
//   2. the global pose map z = L q' + t with linear part
//      L = scale * R(roll) * diag(cos yaw, cos pitch).
// Ground-truth keypoints/Jacobians are these maps evaluated at the canonical
// landmarks; the renderer inverts both maps per pixel, so rendered pixels,
// keypoints, and Jacobians are mutually consistent by construction.

// Per-clip appearance parameters, drawn deterministically from the seed.
struct FaceIdentity {
  double skin[3], lip[3], iris[3], bg0[3], bg1[3];
  double ripple_px = 0.0, ripple_py = 0.0;  // texture ripple phases
  double ripple_amp = 0.025;
};

struct FacePoint {
  double x = 0.0, y = 0.0;
};

// The ten canonical landmarks (eyes, brows, nose, mouth corners/lips, chin).
const std::vector<FacePoint>& canonical_landmarks();

// Forward map canonical point -> image plane for a given pose and mouth
// openness; the ground truth and the renderer share this definition.
FacePoint synth_forward_point(const FacePoint& q, const PoseVector& pose, double mouth);

FaceIdentity sample_identity(core::Rng& rng);

// Renders one frame at size x size; mouth in [0,1].
Tensor render_face(const FaceIdentity& id, const PoseVector& pose, double mouth, int size);

// Full clip: frames, poses, exact keypoints/Jacobians, audio features derived
// from the mouth trajectory, and a companion 16 kHz waveform.
SyntheticClip synth_generate(const SynthSpec& spec, int seed);

}  // namespace font::media
