#include "font/structure/predictor.hpp"

#include <cmath>
#include <utility>

#include <nlohmann/json.hpp>

#include "font/core/errors.hpp"

namespace font::structure {

using json = nlohmann::json;

std::string KeypointPredictorConfig::to_json() const {
  json j;
  j["n_keypoints"] = n_keypoints;
  j["hidden"] = hidden;
  j["img_dim"] = img_dim;
  j["aud_dim"] = aud_dim;
  j["pose_dim"] = pose_dim;
  j["mfcc_coeffs"] = mfcc_coeffs;
  j["mfcc_cols"] = mfcc_cols;
  j["pose_input"] = pose_input;
  j["teacher"] = teacher;
  j["init_seed"] = init_seed;
  return j.dump();
}

KeypointPredictorConfig KeypointPredictorConfig::from_json(const std::string& text) {
  KeypointPredictorConfig c;
  try {
    json j = json::parse(text);
    c.n_keypoints = j.value("n_keypoints", c.n_keypoints);
    c.hidden = j.value("hidden", c.hidden);
    c.img_dim = j.value("img_dim", c.img_dim);
    c.aud_dim = j.value("aud_dim", c.aud_dim);
    c.pose_dim = j.value("pose_dim", c.pose_dim);
    c.mfcc_coeffs = j.value("mfcc_coeffs", c.mfcc_coeffs);
    c.mfcc_cols = j.value("mfcc_cols", c.mfcc_cols);
    c.pose_input = j.value("pose_input", c.pose_input);
    c.teacher = j.value("teacher", c.teacher);
    c.init_seed = j.value("init_seed", c.init_seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("structure predictor config: ") + e.what());
  }
  if (c.n_keypoints <= 0 || c.hidden <= 0 || c.img_dim <= 0 || c.aud_dim <= 0 || c.pose_dim <= 0)
    throw ConfigError("structure predictor config: sizes must be positive");
  if (c.pose_input != "absolute" && c.pose_input != "delta")
    throw ConfigError("structure predictor config: pose_input must be 'absolute' or 'delta'");
  if (c.teacher != "oracle" && c.teacher.rfind("trained:", 0) != 0)
    throw ConfigError("structure predictor config: teacher must be 'oracle' or 'trained:<ckpt>'");
  return c;
}

KeypointPredictorModel::KeypointPredictorModel(const KeypointPredictorConfig& cfg) : cfg_(cfg) {
  Rng rng(cfg.init_seed);
  img_c0_ = nn::Conv2d(3, 16, 3, 2, 1, rng);
  img_c1_ = nn::Conv2d(16, 32, 3, 2, 1, rng);
  img_c2_ = nn::Conv2d(32, 64, 3, 2, 1, rng);
  img_fc_ = nn::Linear(64, cfg.img_dim, rng);
  aud_l0_ = nn::Linear(cfg.mfcc_coeffs * cfg.mfcc_cols, cfg.aud_dim, rng);
  aud_l1_ = nn::Linear(cfg.aud_dim, cfg.aud_dim, rng);
  pose_l0_ = nn::Linear(6, cfg.pose_dim, rng);
  pose_l1_ = nn::Linear(cfg.pose_dim, cfg.pose_dim, rng);
  lstm_ = nn::LstmCell(cfg.img_dim + cfg.aud_dim + cfg.pose_dim, cfg.hidden, rng);
  kp_head_ = nn::Linear(cfg.hidden, 2 * cfg.n_keypoints, rng);
  jac_head_ = nn::Linear(cfg.hidden, 4 * cfg.n_keypoints, rng);

  // Shaped-bias zero-weight heads: the first distillation steps start from
  // the fixed grid and identity Jacobians instead of noise.
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

std::vector<std::pair<Var, Var>> KeypointPredictorModel::predict_vars(
    const Tensor& src_img, const std::vector<AudioFeature>& audio,
    const PoseSequence& poses) const {
  if (audio.empty() || poses.empty())
    throw EmptyInputError("structure prediction needs at least one frame");
  if (audio.size() != poses.size())
    throw ShapeError("audio and pose tracks differ in length: " + std::to_string(audio.size()) +
                     " vs " + std::to_string(poses.size()));
  if (src_img.shape().size() != 3 || src_img.dim(2) != 3 || src_img.dim(0) < 8 || src_img.dim(1) < 8)
    throw ShapeError("source image must be HxWx3 with H, W >= 8");

  Var x = ad::hwc_to_chw(Var(src_img, false));
  x = ad::relu(img_c0_.forward(x));
  x = ad::relu(img_c1_.forward(x));
  x = ad::relu(img_c2_.forward(x));
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  Var img_emb = img_fc_.forward(ad::mean_axis_last(ad::reshape(x, {c, h * w})));

  const bool deltas = cfg_.pose_input == "delta";
  const media::PoseVector base = poses[0];
  nn::LstmCell::State s = lstm_.initial_state();
  std::vector<std::pair<Var, Var>> out;
  out.reserve(audio.size());
  for (std::size_t k = 0; k < audio.size(); ++k) {
    const Tensor& block = audio[k].coeffs;
    if (block.shape() != core::Shape{cfg_.mfcc_coeffs, cfg_.mfcc_cols})
      throw ShapeError("audio feature block has shape " + core::shape_str(block.shape()));
    Var a = ad::reshape(Var(block, false), {cfg_.mfcc_coeffs * cfg_.mfcc_cols});
    Var aud_emb = aud_l1_.forward(ad::relu(aud_l0_.forward(a)));

    media::PoseVector pv = poses[k];
    if (deltas) {
      pv.yaw -= base.yaw;
      pv.pitch -= base.pitch;
      pv.roll -= base.roll;
      pv.scale -= base.scale;
      pv.tx -= base.tx;
      pv.ty -= base.ty;
    }
    Var p(pv.to_tensor(), false);
    Var pose_emb = pose_l1_.forward(ad::relu(pose_l0_.forward(p)));

    s = lstm_.forward(ad::concat0({img_emb, aud_emb, pose_emb}), s);
    Var kp = ad::reshape(ad::tanh_op(kp_head_.forward(s.h)), {cfg_.n_keypoints, 2});
    Var jac = ad::reshape(jac_head_.forward(s.h), {cfg_.n_keypoints, 2, 2});
    out.emplace_back(kp, jac);
  }
  return out;
}

nn::ParamMap KeypointPredictorModel::params() const {
  nn::ParamMap out;
  img_c0_.collect("structure/img_enc/c0", out);
  img_c1_.collect("structure/img_enc/c1", out);
  img_c2_.collect("structure/img_enc/c2", out);
  img_fc_.collect("structure/img_enc/fc", out);
  aud_l0_.collect("structure/aud_enc/l0", out);
  aud_l1_.collect("structure/aud_enc/l1", out);
  pose_l0_.collect("structure/pose_enc/l0", out);
  pose_l1_.collect("structure/pose_enc/l1", out);
  lstm_.collect("structure/decoder/lstm", out);
  kp_head_.collect("structure/decoder/kp_head", out);
  jac_head_.collect("structure/decoder/jac_head", out);
  return out;
}

core::Archive KeypointPredictorModel::to_archive() const {
  core::Archive ar;
  ar.stage = "structure";
  ar.config_json = cfg_.to_json();
  for (const auto& [name, var] : params()) ar.put(name, var.val());
  return ar;
}

void KeypointPredictorModel::save(const std::string& path) const { to_archive().save(path); }

KeypointPredictorModel KeypointPredictorModel::from_archive(const core::Archive& ar) {
  if (ar.stage != "structure")
    throw StageMismatchError("expected a structure-predictor archive, found stage '" + ar.stage +
                             "'");
  KeypointPredictorModel m(KeypointPredictorConfig::from_json(ar.config_json));
  for (auto& [name, var] : m.params()) {
    Tensor t = ar.tensor(name);
    if (t.shape() != var.shape())
      throw IntegrityError("parameter '" + name + "' has shape " + core::shape_str(t.shape()) +
                           ", model expects " + core::shape_str(var.shape()));
    var.node()->value = std::move(t);
  }
  return m;
}

KeypointPredictorModel KeypointPredictorModel::load(const std::string& path) {
  return from_archive(core::Archive::load(path));
}

std::vector<StructureRep> predict_driving(const KeypointPredictorModel& model,
                                          const Tensor& src_img,
                                          const std::vector<AudioFeature>& audio,
                                          const PoseSequence& poses) {
  std::vector<std::pair<Var, Var>> vars = model.predict_vars(src_img, audio, poses);
  std::vector<StructureRep> out;
  out.reserve(vars.size());
  for (auto& [kp, jac] : vars) out.push_back({kp.val(), jac.val()});
  return out;
}

Var distill_loss(const std::vector<std::pair<Var, Var>>& pred,
                 const std::vector<StructureRep>& target) {
  if (pred.empty()) throw EmptyInputError("distill_loss: no frames");
  if (pred.size() != target.size())
    throw ShapeError("distill_loss: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(target.size()) + " targets");
  Var acc;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const auto& [kp, jac] = pred[k];
    if (kp.shape() != target[k].keypoints.shape() || jac.shape() != target[k].jacobians.shape())
      throw ShapeError("distill_loss: keypoint count mismatch at frame " + std::to_string(k));
    // (1/N)(sum |dK| + sum |dJ|) via entry means: 2N and 4N entries.
    Var term = ad::add(ad::mul_scalar(ad::l1_mean(kp, Var(target[k].keypoints, false)), 2.0),
                       ad::mul_scalar(ad::l1_mean(jac, Var(target[k].jacobians, false)), 4.0));
    acc = k == 0 ? term : ad::add(acc, term);
  }
  return ad::mul_scalar(acc, 1.0 / static_cast<double>(pred.size()));
}

double distill_loss(const std::vector<StructureRep>& pred,
                    const std::vector<StructureRep>& target) {
  std::vector<std::pair<Var, Var>> vars;
  vars.reserve(pred.size());
  for (const StructureRep& r : pred)
    vars.emplace_back(Var(r.keypoints, false), Var(r.jacobians, false));
  return distill_loss(vars, target).val()[0];
}

}  // namespace font::structure
