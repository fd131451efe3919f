#pragma once

// Structure representations (keypoints + local affine Jacobians) and the
// pluggable teacher detector that supplies them for distillation. Two
// bindings ship: an oracle backed by synthetic ground truth, and a small
// trained convolutional regressor usable on frames outside the corpus.

#include <memory>
#include <string>
#include <vector>

#include "font/core/archive.hpp"
#include "font/core/autodiff.hpp"
#include "font/core/rng.hpp"
#include "font/core/tensor.hpp"
#include "font/media/types.hpp"
#include "font/nn/layers.hpp"

namespace font::structure {

using ad::Var;
using core::Rng;
using core::Tensor;

// Per-frame unsupervised structure: N keypoints in [-1,1]^2 plus one 2x2
// Jacobian per keypoint describing the local affine motion around it.
struct StructureRep {
  Tensor keypoints;  // {N, 2}
  Tensor jacobians;  // {N, 2, 2}

  int count() const { return keypoints.numel() ? keypoints.dim(0) : 0; }
  void validate() const;  // shapes agree, finite, keypoints within [-1,1]
};

class TeacherDetector {
 public:
  virtual ~TeacherDetector() = default;
  virtual StructureRep detect(const Tensor& frame_hwc) = 0;
  virtual int n_keypoints() const = 0;
  // Recorded into dependent model configs: "oracle" or "trained:<path>".
  virtual std::string binding() const = 0;
};

// Runs the teacher on one frame.
StructureRep teacher_detect(const Tensor& frame_hwc, TeacherDetector& teacher);

// Ground-truth-backed teacher: returns the stored representation for a frame
// it knows (matched by exact content), so distillation targets on the
// synthetic corpus are exact.
class OracleTeacher final : public TeacherDetector {
 public:
  explicit OracleTeacher(const media::SyntheticClip& clip);
  OracleTeacher(std::vector<Tensor> frames, std::vector<StructureRep> reps);

  StructureRep detect(const Tensor& frame_hwc) override;
  int n_keypoints() const override { return n_; }
  std::string binding() const override { return "oracle"; }

  // Oracles for several clips can be pooled into one corpus-wide teacher.
  void absorb(const media::SyntheticClip& clip);

 private:
  std::vector<Tensor> frames_;
  std::vector<StructureRep> reps_;
  int n_ = 0;
};

struct TeacherNetConfig {
  int n_keypoints = 10;
  int base_channels = 16;
  int feat_dim = 128;
  unsigned long long init_seed = 0x7e4c;

  std::string to_json() const;
  static TeacherNetConfig from_json(const std::string& text);
};

// Trained stand-in teacher: a convolutional regressor from a frame to the
// full structure representation. Heads start at a fixed keypoint grid and
// identity Jacobians (zero head weights, shaped biases).
class TrainedTeacher final : public TeacherDetector {
 public:
  TrainedTeacher() : TrainedTeacher(TeacherNetConfig{}) {}
  explicit TrainedTeacher(const TeacherNetConfig& cfg);

  StructureRep detect(const Tensor& frame_hwc) override;
  int n_keypoints() const override { return cfg_.n_keypoints; }
  std::string binding() const override { return binding_; }

  // Differentiable forward used by its own training loop.
  std::pair<Var, Var> forward(const Tensor& frame_hwc) const;  // kp {N,2}, jac {N,2,2}

  const TeacherNetConfig& config() const { return cfg_; }
  nn::ParamMap params() const;
  void save(const std::string& path) const;
  static TrainedTeacher load(const std::string& path);

 private:
  TeacherNetConfig cfg_;
  std::string binding_ = "trained:<unsaved>";
  nn::Conv2d c0_, c1_, c2_;
  nn::Linear fc_, kp_head_, jac_head_;
};

// The fixed keypoint layout the heads are biased toward: n points evenly
// spaced on a circle of radius 0.5.
Tensor keypoint_grid(int n);

// Supervised regression of the stand-in teacher against ground-truth
// structure on the given clips. Returns the step-averaged training loss
// trace (one entry per step).
std::vector<double> train_teacher(TrainedTeacher& teacher,
                                  const std::vector<media::SyntheticClip>& clips, int steps,
                                  int batch, double lr, unsigned long long seed);

}  // namespace font::structure
