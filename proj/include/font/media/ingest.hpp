#pragma once

#include <string>

#include "font/media/types.hpp"

namespace font::media {

// Decodes a video file (.avi, or a single .ppm still treated as a one-frame
// clip), resamples to the requested fps by frame selection, center-crops to
// square, and resizes to size x size. Running the result through
// resample_frames again at the same size/fps is the identity.
FrameSequence extract_frames(const std::string& video_path, int size, double fps);

// The crop/resize/retime core of extract_frames, usable on in-memory clips.
FrameSequence resample_frames(const FrameSequence& in, int size, double fps);

// Per-frame rigid pose source. Implementations must be deterministic;
// failures throw EstimatorError carrying the frame index.
class PoseEstimator {
 public:
  virtual ~PoseEstimator() = default;
  virtual PoseVector estimate(const Tensor& frame, int frame_index) = 0;
  virtual std::string name() const = 0;
};

// Returns the ground-truth pose track it was constructed with; the estimator
// used for all synthetic-corpus work.
class OraclePoseEstimator final : public PoseEstimator {
 public:
  explicit OraclePoseEstimator(PoseSequence poses) : poses_(std::move(poses)) {}
  PoseVector estimate(const Tensor& frame, int frame_index) override;
  std::string name() const override { return "oracle"; }

 private:
  PoseSequence poses_;
};

// Adapter for an external pose tool: reads the tool's CSV output, one
// "yaw,pitch,roll,scale,tx,ty" line per frame.
class CsvPoseEstimator final : public PoseEstimator {
 public:
  explicit CsvPoseEstimator(const std::string& csv_path);
  PoseVector estimate(const Tensor& frame, int frame_index) override;
  std::string name() const override { return "csv-adapter"; }

 private:
  PoseSequence poses_;
};

PoseSequence extract_pose(const FrameSequence& frames, PoseEstimator& estimator);

}  // namespace font::media
