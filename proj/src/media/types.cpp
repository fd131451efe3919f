#include "font/media/types.hpp"

#include <cmath>

#include "font/core/errors.hpp"

namespace font::media {

void FrameSequence::validate() const {
  if (fps <= 0.0) throw RangeError("fps must be positive");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Tensor& f = frames[i];
    if (f.ndim() != 3 || f.dim(2) != 3)
      throw ShapeError("frame " + std::to_string(i) + " is not HxWx3");
    if (!f.same_shape(frames[0]))
      throw ShapeError("frame " + std::to_string(i) + " shape differs from frame 0");
    for (double v : f.raw())
      if (!(v >= 0.0 && v <= 1.0))
        throw RangeError("frame " + std::to_string(i) + " has pixel outside [0,1]");
  }
}

void AudioFeature::validate() const {
  if (coeffs.ndim() != 2 || coeffs.dim(0) != 28 || coeffs.dim(1) != 12)
    throw ShapeError("audio feature must be 28x12, got " + core::shape_str(coeffs.shape()));
  if (!coeffs.all_finite()) throw RangeError("audio feature has non-finite values");
}

void PoseVector::validate() const {
  if (!(scale > 0.0)) throw RangeError("pose scale must be positive");
  for (double r : {yaw, pitch, roll})
    if (!(r > -M_PI && r <= M_PI)) throw RangeError("pose rotation outside (-pi, pi]");
  for (double v : {yaw, pitch, roll, scale, tx, ty})
    if (!std::isfinite(v)) throw RangeError("pose has non-finite component");
}

Tensor PoseVector::to_tensor() const {
  return Tensor::from_data({6}, {yaw, pitch, roll, scale, tx, ty});
}

PoseVector PoseVector::from_tensor(const Tensor& t) {
  if (t.numel() != 6) throw ShapeError("pose tensor must have 6 elements");
  PoseVector p;
  p.yaw = t[0];
  p.pitch = t[1];
  p.roll = t[2];
  p.scale = t[3];
  p.tx = t[4];
  p.ty = t[5];
  return p;
}

void SyntheticClip::validate() const {
  frames.validate();
  const std::size_t n = frames.frames.size();
  if (poses.size() != n || gt_keypoints.size() != n || gt_jacobians.size() != n ||
      audio_features.size() != n)
    throw LengthError("clip per-frame lists have unequal lengths");
  if (!mouth.empty() && mouth.size() != n)
    throw LengthError("mouth trajectory length differs from frame count");
  for (const PoseVector& p : poses) p.validate();
  for (const AudioFeature& a : audio_features) a.validate();
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor& kp = gt_keypoints[i];
    const Tensor& jac = gt_jacobians[i];
    if (kp.ndim() != 2 || kp.dim(1) != 2) throw ShapeError("gt keypoints must be Nx2");
    if (jac.ndim() != 3 || jac.dim(1) != 2 || jac.dim(2) != 2)
      throw ShapeError("gt jacobians must be Nx2x2");
    if (jac.dim(0) != kp.dim(0)) throw LengthError("keypoint/jacobian count mismatch");
    for (double v : kp.raw())
      if (!(v >= -1.0 && v <= 1.0))
        throw RangeError("gt keypoint outside [-1,1] at frame " + std::to_string(i));
    for (int k = 0; k < jac.dim(0); ++k) {
      const double det =
          jac.at(k, 0, 0) * jac.at(k, 1, 1) - jac.at(k, 0, 1) * jac.at(k, 1, 0);
      if (!(det > 0.0))
        throw RangeError("gt jacobian determinant not positive at frame " + std::to_string(i));
    }
  }
}

}  // namespace font::media
