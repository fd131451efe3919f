#include "font/structure/teacher.hpp"

#include <cmath>
#include <cstring>
#include <utility>

#include <nlohmann/json.hpp>

#include "font/core/errors.hpp"
#include "font/core/optim.hpp"

namespace font::structure {

using json = nlohmann::json;

void StructureRep::validate() const {
  if (keypoints.shape().size() != 2 || keypoints.dim(1) != 2)
    throw ShapeError("keypoints must be {N, 2}, got " + core::shape_str(keypoints.shape()));
  const int n = keypoints.dim(0);
  if (jacobians.shape() != core::Shape{n, 2, 2})
    throw ShapeError("jacobians must be {N, 2, 2} with matching N, got " +
                     core::shape_str(jacobians.shape()));
  if (!keypoints.all_finite() || !jacobians.all_finite())
    throw ShapeError("structure representation contains non-finite values");
  for (std::size_t i = 0; i < keypoints.numel(); ++i)
    if (keypoints[i] < -1.0 || keypoints[i] > 1.0)
      throw ShapeError("keypoint coordinate outside [-1, 1]");
}

StructureRep teacher_detect(const Tensor& frame_hwc, TeacherDetector& teacher) {
  return teacher.detect(frame_hwc);
}

namespace {

bool same_content(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.raw().data(), b.raw().data(), a.numel() * sizeof(double)) == 0;
}

void check_frame(const Tensor& frame) {
  if (frame.shape().size() != 3 || frame.dim(2) != 3)
    throw ShapeError("teacher expects an HxWx3 frame, got " + core::shape_str(frame.shape()));
}

}  // namespace

OracleTeacher::OracleTeacher(const media::SyntheticClip& clip) { absorb(clip); }

OracleTeacher::OracleTeacher(std::vector<Tensor> frames, std::vector<StructureRep> reps)
    : frames_(std::move(frames)), reps_(std::move(reps)) {
  if (frames_.size() != reps_.size())
    throw ShapeError("oracle teacher needs one representation per frame");
  if (reps_.empty()) throw EmptyInputError("oracle teacher needs at least one frame");
  n_ = reps_[0].count();
  for (const StructureRep& r : reps_) r.validate();
}

void OracleTeacher::absorb(const media::SyntheticClip& clip) {
  if (clip.count() == 0) throw EmptyInputError("oracle teacher needs at least one frame");
  for (int k = 0; k < clip.count(); ++k) {
    frames_.push_back(clip.frames.frames[static_cast<std::size_t>(k)]);
    StructureRep rep{clip.gt_keypoints[static_cast<std::size_t>(k)],
                     clip.gt_jacobians[static_cast<std::size_t>(k)]};
    rep.validate();
    reps_.push_back(std::move(rep));
  }
  n_ = reps_[0].count();
}

StructureRep OracleTeacher::detect(const Tensor& frame_hwc) {
  check_frame(frame_hwc);
  if (frame_hwc.shape() != frames_[0].shape())
    throw ShapeError("frame resolution " + core::shape_str(frame_hwc.shape()) +
                     " does not match oracle corpus " + core::shape_str(frames_[0].shape()));
  for (std::size_t i = 0; i < frames_.size(); ++i)
    if (same_content(frames_[i], frame_hwc)) return reps_[i];
  throw EstimatorError("frame is not part of the oracle teacher's corpus", -1);
}

Tensor keypoint_grid(int n) {
  Tensor grid({n, 2});
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * M_PI * i / n;
    grid.at(i, 0) = 0.5 * std::cos(a);
    grid.at(i, 1) = 0.5 * std::sin(a);
  }
  return grid;
}

std::string TeacherNetConfig::to_json() const {
  json j;
  j["n_keypoints"] = n_keypoints;
  j["base_channels"] = base_channels;
  j["feat_dim"] = feat_dim;
  j["init_seed"] = init_seed;
  return j.dump();
}

TeacherNetConfig TeacherNetConfig::from_json(const std::string& text) {
  TeacherNetConfig c;
  try {
    json j = json::parse(text);
    c.n_keypoints = j.value("n_keypoints", c.n_keypoints);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.feat_dim = j.value("feat_dim", c.feat_dim);
    c.init_seed = j.value("init_seed", c.init_seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("teacher config: ") + e.what());
  }
  if (c.n_keypoints <= 0 || c.base_channels <= 0 || c.feat_dim <= 0)
    throw ConfigError("teacher config: sizes must be positive");
  return c;
}

TrainedTeacher::TrainedTeacher(const TeacherNetConfig& cfg) : cfg_(cfg) {
  Rng rng(cfg.init_seed);
  const int b = cfg.base_channels;
  c0_ = nn::Conv2d(3, b, 3, 2, 1, rng);
  c1_ = nn::Conv2d(b, 2 * b, 3, 2, 1, rng);
  c2_ = nn::Conv2d(2 * b, 4 * b, 3, 2, 1, rng);
  fc_ = nn::Linear(4 * b, cfg.feat_dim, rng);
  kp_head_ = nn::Linear(cfg.feat_dim, 2 * cfg.n_keypoints, rng);
  jac_head_ = nn::Linear(cfg.feat_dim, 4 * cfg.n_keypoints, rng);

  // Zero head weights with shaped biases: the untrained teacher emits the
  // fixed grid and identity Jacobians for every input.
  kp_head_.w.node()->value.fill(0.0);
  jac_head_.w.node()->value.fill(0.0);
  Tensor grid = keypoint_grid(cfg.n_keypoints);
  for (int i = 0; i < cfg.n_keypoints; ++i) {
    kp_head_.b.node()->value.at(2 * i) = std::atanh(grid.at(i, 0));
    kp_head_.b.node()->value.at(2 * i + 1) = std::atanh(grid.at(i, 1));
    jac_head_.b.node()->value.at(4 * i) = 1.0;
    jac_head_.b.node()->value.at(4 * i + 3) = 1.0;
  }
}

std::pair<Var, Var> TrainedTeacher::forward(const Tensor& frame_hwc) const {
  check_frame(frame_hwc);
  if (frame_hwc.dim(0) < 8 || frame_hwc.dim(1) < 8)
    throw ShapeError("teacher frames must be at least 8x8");
  Var x = ad::hwc_to_chw(Var(frame_hwc, false));
  x = ad::relu(c0_.forward(x));
  x = ad::relu(c1_.forward(x));
  x = ad::relu(c2_.forward(x));
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  Var feat = ad::relu(fc_.forward(ad::mean_axis_last(ad::reshape(x, {c, h * w}))));
  Var kp = ad::reshape(ad::tanh_op(kp_head_.forward(feat)), {cfg_.n_keypoints, 2});
  Var jac = ad::reshape(jac_head_.forward(feat), {cfg_.n_keypoints, 2, 2});
  return {kp, jac};
}

StructureRep TrainedTeacher::detect(const Tensor& frame_hwc) {
  auto [kp, jac] = forward(frame_hwc);
  return {kp.val(), jac.val()};
}

nn::ParamMap TrainedTeacher::params() const {
  nn::ParamMap out;
  c0_.collect("teacher/c0", out);
  c1_.collect("teacher/c1", out);
  c2_.collect("teacher/c2", out);
  fc_.collect("teacher/fc", out);
  kp_head_.collect("teacher/kp_head", out);
  jac_head_.collect("teacher/jac_head", out);
  return out;
}

void TrainedTeacher::save(const std::string& path) const {
  core::Archive ar;
  ar.stage = "teacher";
  ar.config_json = cfg_.to_json();
  for (const auto& [name, var] : params()) ar.put(name, var.val());
  ar.save(path);
}

TrainedTeacher TrainedTeacher::load(const std::string& path) {
  core::Archive ar = core::Archive::load(path);
  if (ar.stage != "teacher")
    throw StageMismatchError("expected a teacher archive, found stage '" + ar.stage + "'");
  TrainedTeacher t(TeacherNetConfig::from_json(ar.config_json));
  for (auto& [name, var] : t.params()) {
    Tensor v = ar.tensor(name);
    if (v.shape() != var.shape())
      throw IntegrityError("parameter '" + name + "' has shape " + core::shape_str(v.shape()) +
                           ", model expects " + core::shape_str(var.shape()));
    var.node()->value = std::move(v);
  }
  t.binding_ = "trained:" + path;
  return t;
}

std::vector<double> train_teacher(TrainedTeacher& teacher,
                                  const std::vector<media::SyntheticClip>& clips, int steps,
                                  int batch, double lr, unsigned long long seed) {
  if (clips.empty()) throw EmptyInputError("teacher training needs at least one clip");
  std::vector<Var> ps;
  for (auto& [name, v] : teacher.params()) ps.push_back(v);
  ad::Adam opt(ps);
  Rng rng(seed);
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(steps));
  for (int step = 0; step < steps; ++step) {
    Var loss;
    for (int b = 0; b < batch; ++b) {
      const auto& clip = clips[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(clips.size())))];
      const int k = rng.uniform_int(clip.count());
      auto [kp, jac] = teacher.forward(clip.frames.frames[static_cast<std::size_t>(k)]);
      Var kp_gt(clip.gt_keypoints[static_cast<std::size_t>(k)], false);
      Var jac_gt(clip.gt_jacobians[static_cast<std::size_t>(k)], false);
      // (1/N)(sum |dK| + sum |dJ|) expressed through entry means.
      Var term = ad::add(ad::mul_scalar(ad::l1_mean(kp, kp_gt), 2.0),
                         ad::mul_scalar(ad::l1_mean(jac, jac_gt), 4.0));
      loss = b == 0 ? term : ad::add(loss, term);
    }
    loss = ad::mul_scalar(loss, 1.0 / batch);
    opt.zero_grad();
    ad::backward(loss);
    opt.step(lr);
    trace.push_back(loss.val()[0]);
  }
  return trace;
}

}  // namespace font::structure
