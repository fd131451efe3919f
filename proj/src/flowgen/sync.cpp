#include "font/flowgen/sync.hpp"

#include <algorithm>
#include <utility>

#include <nlohmann/json.hpp>

#include "font/core/errors.hpp"
#include "font/core/optim.hpp"

namespace font::flowgen {

using ad::Var;
using core::Rng;
using json = nlohmann::json;

std::string SyncEmbedderConfig::to_json() const {
  json j;
  j["window"] = window;
  j["embed_dim"] = embed_dim;
  j["base_channels"] = base_channels;
  j["mfcc_coeffs"] = mfcc_coeffs;
  j["mfcc_cols"] = mfcc_cols;
  j["init_seed"] = init_seed;
  return j.dump();
}

SyncEmbedderConfig SyncEmbedderConfig::from_json(const std::string& text) {
  SyncEmbedderConfig c;
  try {
    json j = json::parse(text);
    c.window = j.value("window", c.window);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.mfcc_coeffs = j.value("mfcc_coeffs", c.mfcc_coeffs);
    c.mfcc_cols = j.value("mfcc_cols", c.mfcc_cols);
    c.init_seed = j.value("init_seed", c.init_seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sync config: ") + e.what());
  }
  if (c.window < 1) throw ConfigError("sync config: window must be at least 1");
  if (c.embed_dim <= 0 || c.base_channels <= 0 || c.mfcc_coeffs <= 0 || c.mfcc_cols <= 0)
    throw ConfigError("sync config: dimensions must be positive");
  return c;
}

SyncEmbedder::SyncEmbedder(const SyncEmbedderConfig& cfg) : cfg_(cfg) {
  if (cfg_.window < 1) throw ConfigError("sync embedder: window must be at least 1");
  Rng rng(cfg_.init_seed);
  const int b = cfg_.base_channels;
  vid_c0_ = nn::Conv2d(3 * cfg_.window, b, 3, 2, 1, rng);
  vid_c1_ = nn::Conv2d(b, 2 * b, 3, 2, 1, rng);
  vid_c2_ = nn::Conv2d(2 * b, 2 * b, 3, 2, 1, rng);
  vid_fc_ = nn::Linear(2 * b, cfg_.embed_dim, rng);
  aud_l0_ = nn::Linear(cfg_.mfcc_coeffs * cfg_.mfcc_cols, cfg_.embed_dim, rng);
  aud_l1_ = nn::Linear(cfg_.window * cfg_.embed_dim, cfg_.embed_dim, rng);
}

Var SyncEmbedder::embed_video(const std::vector<Tensor>& frames) const {
  std::vector<Var> vars;
  vars.reserve(frames.size());
  for (const auto& f : frames) vars.emplace_back(f);
  return embed_video(vars);
}

Var SyncEmbedder::embed_video(const std::vector<Var>& frames) const {
  if (static_cast<int>(frames.size()) != cfg_.window)
    throw ShapeError("video window must hold exactly " + std::to_string(cfg_.window) +
                     " frames, got " + std::to_string(frames.size()));
  for (const auto& f : frames) {
    if (f.shape().size() != 3 || f.shape()[2] != 3 || f.shape()[0] < 8 || f.shape()[1] < 8)
      throw ShapeError("window frames must be {h, w, 3} with h, w >= 8, got " +
                       core::shape_str(f.shape()));
    if (!(f.shape() == frames[0].shape()))
      throw ShapeError("window frames must share one resolution");
  }
  std::vector<Var> planes;
  planes.reserve(frames.size());
  for (const auto& f : frames) planes.push_back(ad::hwc_to_chw(f));
  // Subtract the temporal mean so the tower sees window dynamics, not the
  // static appearance shared by in-sync and shifted windows alike.
  Var mean = planes[0];
  for (std::size_t t = 1; t < planes.size(); ++t) mean = ad::add(mean, planes[t]);
  mean = ad::mul_scalar(mean, 1.0 / static_cast<double>(planes.size()));
  for (auto& p : planes) p = ad::sub(p, mean);
  Var x = ad::concat0(planes);  // {3*window, h, w}
  x = ad::relu(vid_c0_.forward(x));
  x = ad::relu(vid_c1_.forward(x));
  x = ad::relu(vid_c2_.forward(x));
  const auto& s = x.shape();
  Var pooled = ad::mean_axis_last(ad::reshape(x, {s[0], s[1] * s[2]}));
  return vid_fc_.forward(pooled);
}

Var SyncEmbedder::embed_audio(const std::vector<media::AudioFeature>& feats) const {
  if (static_cast<int>(feats.size()) != cfg_.window)
    throw ShapeError("audio window must hold exactly " + std::to_string(cfg_.window) +
                     " blocks, got " + std::to_string(feats.size()));
  std::vector<Var> flats;
  flats.reserve(feats.size());
  for (const auto& f : feats) {
    if (f.coeffs.ndim() != 2 || f.coeffs.dim(0) != cfg_.mfcc_coeffs ||
        f.coeffs.dim(1) != cfg_.mfcc_cols)
      throw ShapeError("audio blocks must be {" + std::to_string(cfg_.mfcc_coeffs) + ", " +
                       std::to_string(cfg_.mfcc_cols) + "}, got " +
                       core::shape_str(f.coeffs.shape()));
    flats.push_back(ad::reshape(Var(f.coeffs), {cfg_.mfcc_coeffs * cfg_.mfcc_cols}));
  }
  // Same temporal centering as the video tower.
  Var mean = flats[0];
  for (std::size_t t = 1; t < flats.size(); ++t) mean = ad::add(mean, flats[t]);
  mean = ad::mul_scalar(mean, 1.0 / static_cast<double>(flats.size()));
  std::vector<Var> embeds;
  embeds.reserve(flats.size());
  for (const auto& f : flats) embeds.push_back(ad::relu(aud_l0_.forward(ad::sub(f, mean))));
  return aud_l1_.forward(ad::concat0(embeds));
}

nn::ParamMap SyncEmbedder::params() const {
  nn::ParamMap out;
  vid_c0_.collect("sync/vid/c0", out);
  vid_c1_.collect("sync/vid/c1", out);
  vid_c2_.collect("sync/vid/c2", out);
  vid_fc_.collect("sync/vid/fc", out);
  aud_l0_.collect("sync/aud/l0", out);
  aud_l1_.collect("sync/aud/l1", out);
  return out;
}

core::Archive SyncEmbedder::to_archive() const {
  core::Archive ar;
  ar.stage = "sync";
  ar.config_json = cfg_.to_json();
  for (const auto& [name, var] : params()) ar.put(name, var.val());
  return ar;
}

void SyncEmbedder::save(const std::string& path) const { to_archive().save(path); }

SyncEmbedder SyncEmbedder::from_archive(const core::Archive& ar) {
  if (ar.stage != "sync")
    throw StageMismatchError("expected a sync-embedder archive, found stage '" + ar.stage + "'");
  SyncEmbedder m(SyncEmbedderConfig::from_json(ar.config_json));
  for (auto& [name, var] : m.params()) {
    Tensor t = ar.tensor(name);
    if (t.shape() != var.shape())
      throw IntegrityError("parameter '" + name + "' has shape " + core::shape_str(t.shape()) +
                           ", model expects " + core::shape_str(var.shape()));
    var.node()->value = std::move(t);
  }
  return m;
}

SyncEmbedder SyncEmbedder::load(const std::string& path) {
  return from_archive(core::Archive::load(path));
}

Var sync_cosine(const Var& v, const Var& a) {
  if (v.shape() != a.shape() || v.shape().size() != 1)
    throw ShapeError("cosine inputs must be equal-length vectors");
  Var dot = ad::sum(ad::mul(v, a));
  Var nv = ad::sqrt_op(ad::sum(ad::mul(v, v)));
  Var na = ad::sqrt_op(ad::sum(ad::mul(a, a)));
  Var raw = ad::div(dot, ad::clamp_min(ad::mul(nv, na), 1e-8));
  // Rounding can push |raw| a hair past 1; pin the value into [-1, 1].
  return ad::neg(ad::clamp_min(ad::neg(ad::clamp_min(raw, -1.0)), -1.0));
}

double sync_cosine(const Tensor& v, const Tensor& a) {
  return sync_cosine(Var(v), Var(a)).val().at(0);
}

double sync_score(const SyncEmbedder& embedder, const std::vector<Tensor>& frames,
                  const std::vector<media::AudioFeature>& feats) {
  return sync_cosine(embedder.embed_video(frames), embedder.embed_audio(feats)).val().at(0);
}

SyncTrainTrace train_sync_embedder(SyncEmbedder& embedder,
                                   const std::vector<media::SyntheticClip>& clips,
                                   const SyncTrainConfig& cfg) {
  if (static_cast<int>(clips.size()) < 50)
    throw InsufficientDataError("sync training needs at least 50 clips, got " +
                                std::to_string(clips.size()));
  const int w = embedder.config().window;
  for (const auto& clip : clips) {
    if (clip.count() != static_cast<int>(clip.audio_features.size()))
      throw LengthError("clip has " + std::to_string(clip.count()) + " frames but " +
                        std::to_string(clip.audio_features.size()) + " audio blocks");
    if (clip.count() < w + 2 * cfg.min_shift)
      throw LengthError("clips must hold at least window + 2*min_shift = " +
                        std::to_string(w + 2 * cfg.min_shift) + " frames, got " +
                        std::to_string(clip.count()));
  }
  if (cfg.steps <= 0 || cfg.batch <= 0)
    throw ConfigError("sync training needs positive steps and batch");

  std::vector<Var> ps;
  for (auto& [name, v] : embedder.params()) ps.push_back(v);
  ad::Adam opt(ps);
  Rng rng(cfg.seed);
  SyncTrainTrace trace;
  trace.loss.reserve(static_cast<std::size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    Var loss;
    for (int b = 0; b < cfg.batch; ++b) {
      const auto& clip =
          clips[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(clips.size())))];
      const int max_start = clip.count() - w;
      const int s = rng.uniform_int(max_start + 1);
      // Enumerate the starts at least min_shift away on either side; the
      // length guard above guarantees at least one exists for every s.
      const int n_lo = std::max(0, s - cfg.min_shift + 1);
      const int n_hi = std::max(0, max_start - s - cfg.min_shift + 1);
      const int r = rng.uniform_int(n_lo + n_hi);
      const int s2 = r < n_lo ? r : s + cfg.min_shift + (r - n_lo);

      std::vector<Tensor> window_frames(clip.frames.frames.begin() + s,
                                        clip.frames.frames.begin() + s + w);
      std::vector<media::AudioFeature> aud_pos(clip.audio_features.begin() + s,
                                               clip.audio_features.begin() + s + w);
      std::vector<media::AudioFeature> aud_neg(clip.audio_features.begin() + s2,
                                               clip.audio_features.begin() + s2 + w);

      Var v = embedder.embed_video(window_frames);
      Var cos_pos = sync_cosine(v, embedder.embed_audio(aud_pos));
      Var cos_neg = sync_cosine(v, embedder.embed_audio(aud_neg));
      Var hinge = ad::relu(ad::add_scalar(ad::sub(cos_neg, cos_pos), cfg.hinge_margin));
      loss = loss.defined() ? ad::add(loss, hinge) : hinge;
    }
    loss = ad::mul_scalar(loss, 1.0 / cfg.batch);

    opt.zero_grad();
    ad::backward(loss);
    opt.step(cfg.lr);
    trace.loss.push_back(loss.val().at(0));
  }
  return trace;
}

}  // namespace font::flowgen
