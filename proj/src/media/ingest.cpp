#include "font/media/ingest.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "font/core/errors.hpp"
#include "font/kernels/kernels.hpp"
#include "font/media/io.hpp"

namespace font::media {

namespace {

Tensor crop_resize(const Tensor& frame, int size) {
  const int h = frame.dim(0), w = frame.dim(1);
  const int side = std::min(h, w);
  const int y0 = (h - side) / 2, x0 = (w - side) / 2;
  // HWC -> CHW on the square crop.
  std::vector<double> chw(static_cast<std::size_t>(3) * side * side);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        chw[(static_cast<std::size_t>(c) * side + y) * side + x] = frame.at(y0 + y, x0 + x, c);
  std::vector<double> out(static_cast<std::size_t>(3) * size * size);
  kernels::resize_bilinear_forward(chw.data(), out.data(), 3, side, side, size, size);
  Tensor res({size, size, 3});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        res.at(y, x, c) = out[(static_cast<std::size_t>(c) * size + y) * size + x];
  return res;
}

}  // namespace

FrameSequence resample_frames(const FrameSequence& in, int size, double fps) {
  if (size <= 0) throw RangeError("target size must be positive");
  if (fps <= 0.0) throw RangeError("target fps must be positive");
  if (in.frames.empty()) throw EmptyInputError("no frames to resample");
  const int n_out = static_cast<int>(std::floor(in.count() * fps / in.fps + 1e-9));
  if (n_out <= 0) throw EmptyInputError("clip too short for target fps");

  FrameSequence out;
  out.fps = fps;
  out.frames.reserve(static_cast<std::size_t>(n_out));
  for (int i = 0; i < n_out; ++i) {
    const int src = std::min(in.count() - 1,
                             static_cast<int>(std::floor(i * in.fps / fps + 1e-9)));
    out.frames.push_back(crop_resize(in.frames[static_cast<std::size_t>(src)], size));
  }
  return out;
}

FrameSequence extract_frames(const std::string& video_path, int size, double fps) {
  if (size <= 0) throw RangeError("target size must be positive");
  FrameSequence native;
  if (video_path.size() >= 4 && video_path.substr(video_path.size() - 4) == ".ppm") {
    native.frames.push_back(read_ppm(video_path));
    native.fps = fps;
  } else {
    native = read_avi(video_path);
  }
  return resample_frames(native, size, fps);
}

PoseVector OraclePoseEstimator::estimate(const Tensor& frame, int frame_index) {
  (void)frame;
  if (frame_index < 0 || frame_index >= static_cast<int>(poses_.size()))
    throw EstimatorError("oracle has no pose for this frame", frame_index);
  return poses_[static_cast<std::size_t>(frame_index)];
}

CsvPoseEstimator::CsvPoseEstimator(const std::string& csv_path) {
  std::ifstream f(csv_path);
  if (!f) throw DecodeError("cannot open pose csv '" + csv_path + "'");
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    PoseVector p;
    char comma;
    if (!(ss >> p.yaw >> comma >> p.pitch >> comma >> p.roll >> comma >> p.scale >> comma >>
          p.tx >> comma >> p.ty))
      throw DecodeError("bad pose csv line: '" + line + "'");
    poses_.push_back(p);
  }
}

PoseVector CsvPoseEstimator::estimate(const Tensor& frame, int frame_index) {
  (void)frame;
  if (frame_index < 0 || frame_index >= static_cast<int>(poses_.size()))
    throw EstimatorError("pose csv has no row for this frame", frame_index);
  return poses_[static_cast<std::size_t>(frame_index)];
}

PoseSequence extract_pose(const FrameSequence& frames, PoseEstimator& estimator) {
  PoseSequence out;
  out.reserve(frames.frames.size());
  for (int i = 0; i < frames.count(); ++i) {
    try {
      out.push_back(estimator.estimate(frames.frames[static_cast<std::size_t>(i)], i));
    } catch (const EstimatorError&) {
      throw;
    } catch (const std::exception& e) {
      throw EstimatorError(e.what(), i);
    }
  }
  return out;
}

}  // namespace font::media
