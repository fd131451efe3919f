#include "font/pose/cvae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include <nlohmann/json.hpp>

#include "font/core/errors.hpp"

namespace font::pose {

using json = nlohmann::json;

std::string PoseCvaeConfig::to_json() const {
  json j;
  j["d_z"] = d_z;
  j["t"] = t;
  j["hidden"] = hidden;
  j["cond_dim"] = cond_dim;
  j["mfcc_coeffs"] = mfcc_coeffs;
  j["mfcc_cols"] = mfcc_cols;
  j["lambda_recon"] = lambda_recon;
  j["lambda_kl"] = lambda_kl;
  j["lambda_adv"] = lambda_adv;
  j["use_vae"] = use_vae;
  j["recon"] = recon;
  j["init_seed"] = init_seed;
  return j.dump();
}

PoseCvaeConfig PoseCvaeConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("pose model config: ") + e.what());
  }
  PoseCvaeConfig c;
  try {
    c.d_z = j.value("d_z", c.d_z);
    c.t = j.value("t", c.t);
    c.hidden = j.value("hidden", c.hidden);
    c.cond_dim = j.value("cond_dim", c.cond_dim);
    c.mfcc_coeffs = j.value("mfcc_coeffs", c.mfcc_coeffs);
    c.mfcc_cols = j.value("mfcc_cols", c.mfcc_cols);
    c.lambda_recon = j.value("lambda_recon", c.lambda_recon);
    c.lambda_kl = j.value("lambda_kl", c.lambda_kl);
    c.lambda_adv = j.value("lambda_adv", c.lambda_adv);
    c.use_vae = j.value("use_vae", c.use_vae);
    c.recon = j.value("recon", c.recon);
    c.init_seed = j.value("init_seed", c.init_seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("pose model config: ") + e.what());
  }
  if (c.d_z <= 0 || c.t <= 0 || c.hidden <= 0 || c.cond_dim <= 0)
    throw ConfigError("pose model config: sizes must be positive");
  if (c.recon != "ssim" && c.recon != "l1")
    throw ConfigError("pose model config: recon must be 'ssim' or 'l1'");
  return c;
}

PoseCvaeModel::PoseCvaeModel(const PoseCvaeConfig& cfg) : cfg_(cfg) {
  Rng rng(cfg.init_seed);
  const int cd = cfg.cond_dim;
  img_c0_ = nn::Conv2d(3, 8, 3, 2, 1, rng);
  img_c1_ = nn::Conv2d(8, 16, 3, 2, 1, rng);
  img_c2_ = nn::Conv2d(16, 32, 3, 2, 1, rng);
  img_fc_ = nn::Linear(32, cd, rng);
  aud_c0_ = nn::Conv1d(cfg.mfcc_coeffs, 48, 5, 1, 2, rng);
  aud_c1_ = nn::Conv1d(48, 64, 3, 1, 1, rng);
  aud_fc_ = nn::Linear(64, cd, rng);
  const int flat = cfg.t * 6;
  enc_l0_ = nn::Linear(flat + 2 * cd, cfg.hidden, rng);
  enc_l1_ = nn::Linear(cfg.hidden, cfg.hidden, rng);
  enc_l2_ = nn::Linear(cfg.hidden, 2 * cfg.d_z, rng);
  dec_l0_ = nn::Linear(cfg.d_z + 2 * cd, cfg.hidden, rng);
  dec_l1_ = nn::Linear(cfg.hidden, cfg.hidden, rng);
  dec_l2_ = nn::Linear(cfg.hidden, flat, rng);
  det_lstm_ = nn::LstmCell(2 * cd, 96, rng);
  det_head_ = nn::Linear(96, 6, rng);
  disc_c0_ = nn::Conv1d(6, 16, 5, 1, 2, rng);
  disc_c1_ = nn::Conv1d(16, 16, 5, 1, 2, rng);
  disc_fc_ = nn::Linear(16, 1, rng);
}

Var PoseCvaeModel::embed_image(const Tensor& img_hwc) const {
  if (img_hwc.shape().size() != 3 || img_hwc.dim(2) != 3)
    throw ShapeError("source image must be HxWx3, got " + core::shape_str(img_hwc.shape()));
  if (img_hwc.dim(0) < 8 || img_hwc.dim(1) < 8)
    throw ShapeError("source image must be at least 8x8");
  Var x = ad::hwc_to_chw(Var(img_hwc, false));
  x = ad::relu(img_c0_.forward(x));
  x = ad::relu(img_c1_.forward(x));
  x = ad::relu(img_c2_.forward(x));
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  Var pooled = ad::mean_axis_last(ad::reshape(x, {c, h * w}));
  return img_fc_.forward(pooled);
}

Var PoseCvaeModel::embed_audio(const std::vector<AudioFeature>& feats) const {
  if (static_cast<int>(feats.size()) != cfg_.t)
    throw ShapeError("audio embedding expects exactly " + std::to_string(cfg_.t) +
                     " feature blocks, got " + std::to_string(feats.size()));
  // One column per frame: each MFCC block is averaged over its 12 windows.
  Tensor seq({cfg_.mfcc_coeffs, cfg_.t});
  for (int k = 0; k < cfg_.t; ++k) {
    const Tensor& block = feats[static_cast<std::size_t>(k)].coeffs;
    if (block.shape() != core::Shape{cfg_.mfcc_coeffs, cfg_.mfcc_cols})
      throw ShapeError("audio feature block has shape " + core::shape_str(block.shape()));
    for (int c = 0; c < cfg_.mfcc_coeffs; ++c) {
      double acc = 0.0;
      for (int j = 0; j < cfg_.mfcc_cols; ++j) acc += block.at(c, j);
      seq.at(c, k) = acc / cfg_.mfcc_cols;
    }
  }
  Var x(std::move(seq), false);
  x = ad::relu(aud_c0_.forward(x));
  x = ad::relu(aud_c1_.forward(x));
  return aud_fc_.forward(ad::mean_axis_last(x));
}

LatentDist PoseCvaeModel::encode(const Var& deltas, const Var& cond_img,
                                 const Var& cond_audio) const {
  if (deltas.shape() != core::Shape{cfg_.t, 6})
    throw ShapeError("encoder expects deltas of shape {" + std::to_string(cfg_.t) +
                     ", 6}, got " + core::shape_str(deltas.shape()));
  if (cond_img.shape() != core::Shape{cfg_.cond_dim} ||
      cond_audio.shape() != core::Shape{cfg_.cond_dim})
    throw ShapeError("condition embeddings must have width " + std::to_string(cfg_.cond_dim));
  Var x = ad::concat0({ad::reshape(deltas, {cfg_.t * 6}), cond_img, cond_audio});
  x = ad::relu(enc_l0_.forward(x));
  x = ad::relu(enc_l1_.forward(x));
  Var out = enc_l2_.forward(x);
  return {ad::slice0(out, 0, cfg_.d_z), ad::slice0(out, cfg_.d_z, cfg_.d_z)};
}

Var PoseCvaeModel::decode(const Var& z, const Var& cond_img, const Var& cond_audio) const {
  if (z.shape() != core::Shape{cfg_.d_z})
    throw ShapeError("latent must have width " + std::to_string(cfg_.d_z));
  Var x = ad::concat0({z, cond_img, cond_audio});
  x = ad::relu(dec_l0_.forward(x));
  x = ad::relu(dec_l1_.forward(x));
  Var flat = dec_l2_.forward(x);
  // Subtracting the first row pins deltas[0] to exactly zero.
  return ad::sub_first_row(ad::reshape(flat, {cfg_.t, 6}));
}

Var PoseCvaeModel::decode_deterministic(const Var& cond_img, const Var& cond_audio) const {
  Var in = ad::concat0({cond_img, cond_audio});
  nn::LstmCell::State s = det_lstm_.initial_state();
  std::vector<Var> rows;
  rows.reserve(static_cast<std::size_t>(cfg_.t));
  for (int k = 0; k < cfg_.t; ++k) {
    s = det_lstm_.forward(in, s);
    rows.push_back(det_head_.forward(s.h));
  }
  Var flat = ad::concat0(rows);
  return ad::sub_first_row(ad::reshape(flat, {cfg_.t, 6}));
}

Var PoseCvaeModel::discriminate(const Var& deltas) const {
  if (deltas.shape() != core::Shape{cfg_.t, 6})
    throw ShapeError("discriminator expects deltas of shape {" + std::to_string(cfg_.t) +
                     ", 6}, got " + core::shape_str(deltas.shape()));
  Var x = ad::transpose2d(deltas);  // {6, t}
  x = ad::leaky_relu(disc_c0_.forward(x), 0.2);
  x = ad::leaky_relu(disc_c1_.forward(x), 0.2);
  Var pooled = ad::mean_axis_last(x);  // {16}
  return ad::sigmoid(disc_fc_.forward(pooled));  // {1}
}

nn::ParamMap PoseCvaeModel::params() const {
  nn::ParamMap out = generator_params();
  nn::ParamMap d = discriminator_params();
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

nn::ParamMap PoseCvaeModel::generator_params() const {
  nn::ParamMap out;
  img_c0_.collect("pose_cvae/cond_img/c0", out);
  img_c1_.collect("pose_cvae/cond_img/c1", out);
  img_c2_.collect("pose_cvae/cond_img/c2", out);
  img_fc_.collect("pose_cvae/cond_img/fc", out);
  aud_c0_.collect("pose_cvae/cond_audio/c0", out);
  aud_c1_.collect("pose_cvae/cond_audio/c1", out);
  aud_fc_.collect("pose_cvae/cond_audio/fc", out);
  enc_l0_.collect("pose_cvae/encoder/l0", out);
  enc_l1_.collect("pose_cvae/encoder/l1", out);
  enc_l2_.collect("pose_cvae/encoder/l2", out);
  if (cfg_.use_vae) {
    dec_l0_.collect("pose_cvae/decoder/l0", out);
    dec_l1_.collect("pose_cvae/decoder/l1", out);
    dec_l2_.collect("pose_cvae/decoder/l2", out);
  } else {
    det_lstm_.collect("pose_cvae/decoder/lstm", out);
    det_head_.collect("pose_cvae/decoder/head", out);
  }
  return out;
}

nn::ParamMap PoseCvaeModel::discriminator_params() const {
  nn::ParamMap out;
  disc_c0_.collect("pose_cvae/disc/c0", out);
  disc_c1_.collect("pose_cvae/disc/c1", out);
  disc_fc_.collect("pose_cvae/disc/fc", out);
  return out;
}

core::Archive PoseCvaeModel::to_archive() const {
  core::Archive ar;
  ar.stage = "pose";
  ar.config_json = cfg_.to_json();
  for (const auto& [name, var] : params()) ar.put(name, var.val());
  return ar;
}

void PoseCvaeModel::save(const std::string& path) const { to_archive().save(path); }

PoseCvaeModel PoseCvaeModel::from_archive(const core::Archive& ar) {
  if (ar.stage != "pose")
    throw StageMismatchError("expected a pose-model archive, found stage '" + ar.stage + "'");
  PoseCvaeModel m(PoseCvaeConfig::from_json(ar.config_json));
  for (auto& [name, var] : m.params()) {
    Tensor t = ar.tensor(name);
    if (t.shape() != var.shape())
      throw IntegrityError("parameter '" + name + "' has shape " + core::shape_str(t.shape()) +
                           ", model expects " + core::shape_str(var.shape()));
    var.node()->value = std::move(t);
  }
  return m;
}

PoseCvaeModel PoseCvaeModel::load(const std::string& path) {
  return from_archive(core::Archive::load(path));
}

namespace {

// Largest-magnitude-safe exact delta: nudges d = a - b by ulps until
// b + d rounds to a (bounded search; realistic pose magnitudes always
// land within a couple of steps).
double exact_delta(double a, double b) {
  double d = a - b;
  const double inf = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 64 && b + d < a; ++i) d = std::nextafter(d, inf);
  for (int i = 0; i < 64 && b + d > a; ++i) d = std::nextafter(d, -inf);
  return d;
}

PoseVector add_delta(const PoseVector& base, const Tensor& deltas, int row) {
  PoseVector p;
  p.yaw = base.yaw + deltas.at(row, 0);
  p.pitch = base.pitch + deltas.at(row, 1);
  p.roll = base.roll + deltas.at(row, 2);
  p.scale = base.scale + deltas.at(row, 3);
  p.tx = base.tx + deltas.at(row, 4);
  p.ty = base.ty + deltas.at(row, 5);
  return p;
}

}  // namespace

std::pair<PoseVector, Tensor> pose_to_delta(const PoseSequence& seq) {
  if (seq.empty()) throw EmptyInputError("pose_to_delta: empty sequence");
  const int n = static_cast<int>(seq.size());
  const PoseVector& b = seq[0];
  Tensor deltas({n, 6});
  for (int k = 0; k < n; ++k) {
    const PoseVector& p = seq[static_cast<std::size_t>(k)];
    deltas.at(k, 0) = exact_delta(p.yaw, b.yaw);
    deltas.at(k, 1) = exact_delta(p.pitch, b.pitch);
    deltas.at(k, 2) = exact_delta(p.roll, b.roll);
    deltas.at(k, 3) = exact_delta(p.scale, b.scale);
    deltas.at(k, 4) = exact_delta(p.tx, b.tx);
    deltas.at(k, 5) = exact_delta(p.ty, b.ty);
  }
  return {b, std::move(deltas)};
}

PoseSequence delta_to_pose(const Tensor& deltas, const PoseVector& initial) {
  if (deltas.shape().size() != 2 || deltas.dim(1) != 6)
    throw ShapeError("deltas must be {T, 6}, got " + core::shape_str(deltas.shape()));
  if (deltas.dim(0) == 0) throw EmptyInputError("delta_to_pose: empty deltas");
  PoseSequence out(static_cast<std::size_t>(deltas.dim(0)));
  for (int k = 0; k < deltas.dim(0); ++k) out[static_cast<std::size_t>(k)] = add_delta(initial, deltas, k);
  return out;
}

Var reparameterize(const LatentDist& dist, Rng& rng) {
  if (dist.mu.shape() != dist.log_var.shape())
    throw ShapeError("latent mean and log-variance must have the same shape");
  Tensor eps = Tensor::randn(dist.mu.shape(), rng);
  Var sigma = ad::exp_op(ad::mul_scalar(dist.log_var, 0.5));
  return ad::add(dist.mu, ad::mul(sigma, Var(std::move(eps), false)));
}

Var reparameterize(const LatentDist& dist, unsigned long long seed) {
  Rng rng(seed);
  return reparameterize(dist, rng);
}

PoseSequence infer_pose_sequence(const PoseCvaeModel& model, const Tensor& src_img,
                                 const std::vector<AudioFeature>& audio,
                                 const PoseVector& initial, unsigned long long seed) {
  if (audio.empty()) throw EmptyInputError("inference needs at least one audio frame");
  const PoseCvaeConfig& cfg = model.config();
  const int t = cfg.t;
  const int n = static_cast<int>(audio.size());
  const int n_clips = (n + t - 1) / t;

  Var cond_img = model.embed_image(src_img);
  Rng rng(seed);
  PoseSequence out;
  out.reserve(static_cast<std::size_t>(n));
  PoseVector anchor = initial;
  for (int k = 0; k < n_clips; ++k) {
    std::vector<AudioFeature> clip(static_cast<std::size_t>(t));
    for (int j = 0; j < t; ++j)
      clip[static_cast<std::size_t>(j)] = audio[static_cast<std::size_t>(std::min(k * t + j, n - 1))];
    Var cond_audio = model.embed_audio(clip);
    Tensor deltas;
    if (cfg.use_vae) {
      Var z(Tensor::randn({cfg.d_z}, rng), false);
      deltas = model.decode(z, cond_img, cond_audio).val();
    } else {
      deltas = model.decode_deterministic(cond_img, cond_audio).val();
    }
    for (int j = 0; j < t && static_cast<int>(out.size()) < n; ++j)
      out.push_back(add_delta(anchor, deltas, j));
    anchor = out.back();
  }
  return out;
}

PoseSequence infer_pose_sequence(const PoseCvaeModel& model, const Tensor& src_img,
                                 const std::vector<AudioFeature>& audio,
                                 media::PoseEstimator& estimator, unsigned long long seed) {
  return infer_pose_sequence(model, src_img, audio, estimator.estimate(src_img, 0), seed);
}

}  // namespace font::pose
