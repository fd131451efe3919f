#include "font/flowgen/perceptual.hpp"

#include <utility>

#include <nlohmann/json.hpp>

#include "font/core/errors.hpp"
#include "font/core/optim.hpp"

namespace font::flowgen {

using ad::Var;
using core::Rng;
using json = nlohmann::json;

namespace {

std::string extractor_config_json(const ConvExtractorConfig& c) {
  json j;
  j["base_channels"] = c.base_channels;
  j["n_taps"] = c.n_taps;
  j["init_seed"] = c.init_seed;
  return j.dump();
}

ConvExtractorConfig extractor_config_from_json(const std::string& text) {
  ConvExtractorConfig c;
  try {
    json j = json::parse(text);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.n_taps = j.value("n_taps", c.n_taps);
    c.init_seed = j.value("init_seed", c.init_seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("feature extractor config: ") + e.what());
  }
  if (c.base_channels <= 0)
    throw ConfigError("feature extractor config: base_channels must be positive");
  if (c.n_taps < 1 || c.n_taps > 3)
    throw ConfigError("feature extractor config: n_taps must be 1..3");
  return c;
}

void check_chw_image(const ad::Var& img) {
  const auto& s = img.shape();
  if (s.size() != 3 || s[0] != 3 || s[1] < 4 || s[2] < 4)
    throw ShapeError("extractor input must be {3, h, w} with h, w >= 4, got " +
                     core::shape_str(s));
}

}  // namespace

ConvFeatureExtractor::ConvFeatureExtractor(const ConvExtractorConfig& cfg) : cfg_(cfg) {
  if (cfg_.base_channels <= 0) throw ConfigError("feature extractor: base_channels must be positive");
  if (cfg_.n_taps < 1 || cfg_.n_taps > 3) throw ConfigError("feature extractor: n_taps must be 1..3");
  Rng rng(cfg_.init_seed);
  const int b = cfg_.base_channels;
  e0_ = nn::Conv2d(3, b, 3, 1, 1, rng);
  e1_ = nn::Conv2d(b, 2 * b, 3, 2, 1, rng);
  e2_ = nn::Conv2d(2 * b, 2 * b, 3, 2, 1, rng);
  d0_ = nn::Conv2d(2 * b, b, 3, 1, 1, rng);
  d1_ = nn::Conv2d(b, 3, 3, 1, 1, rng);
}

std::vector<Var> ConvFeatureExtractor::taps(const Var& img) const {
  check_chw_image(img);
  std::vector<Var> out;
  Var t0 = ad::relu(e0_.forward(img));
  out.push_back(t0);
  if (cfg_.n_taps >= 2) {
    Var t1 = ad::relu(e1_.forward(t0));
    out.push_back(t1);
    if (cfg_.n_taps >= 3) out.push_back(ad::relu(e2_.forward(t1)));
  }
  return out;
}

ad::Var ConvFeatureExtractor::reconstruct(const Var& img) const {
  check_chw_image(img);
  const int h = img.shape()[1], w = img.shape()[2];
  Var t0 = ad::relu(e0_.forward(img));
  Var t1 = ad::relu(e1_.forward(t0));
  Var t2 = ad::relu(e2_.forward(t1));
  Var y = ad::resize_bilinear(t2, (h + 1) / 2, (w + 1) / 2);
  y = ad::relu(d0_.forward(y));
  y = ad::resize_bilinear(y, h, w);
  return ad::sigmoid(d1_.forward(y));
}

nn::ParamMap ConvFeatureExtractor::params() const {
  nn::ParamMap out;
  e0_.collect("features/e0", out);
  e1_.collect("features/e1", out);
  e2_.collect("features/e2", out);
  d0_.collect("features/d0", out);
  d1_.collect("features/d1", out);
  return out;
}

core::Archive ConvFeatureExtractor::to_archive() const {
  core::Archive ar;
  ar.stage = "features";
  ar.config_json = extractor_config_json(cfg_);
  for (const auto& [name, var] : params()) ar.put(name, var.val());
  return ar;
}

void ConvFeatureExtractor::save(const std::string& path) const { to_archive().save(path); }

ConvFeatureExtractor ConvFeatureExtractor::from_archive(const core::Archive& ar) {
  if (ar.stage != "features")
    throw StageMismatchError("expected a feature-extractor archive, found stage '" + ar.stage +
                             "'");
  ConvFeatureExtractor fx(extractor_config_from_json(ar.config_json));
  for (auto& [name, var] : fx.params()) {
    Tensor t = ar.tensor(name);
    if (t.shape() != var.shape())
      throw IntegrityError("parameter '" + name + "' has shape " + core::shape_str(t.shape()) +
                           ", model expects " + core::shape_str(var.shape()));
    var.node()->value = std::move(t);
  }
  return fx;
}

ConvFeatureExtractor ConvFeatureExtractor::load(const std::string& path) {
  return from_archive(core::Archive::load(path));
}

ad::Var perceptual_loss(const Var& gen_chw, const Var& ref_chw, const FeatureExtractor& fx) {
  if (gen_chw.shape() != ref_chw.shape())
    throw ShapeError("perceptual loss inputs must have equal shapes, got " +
                     core::shape_str(gen_chw.shape()) + " vs " +
                     core::shape_str(ref_chw.shape()));
  if (gen_chw.shape().size() != 3)
    throw ShapeError("perceptual loss inputs must be {c, h, w}");
  std::vector<Var> ta = fx.taps(gen_chw);
  std::vector<Var> tb = fx.taps(ref_chw);
  Var loss = ad::l1_mean(ta[0], tb[0]);
  for (std::size_t i = 1; i < ta.size(); ++i) loss = ad::add(loss, ad::l1_mean(ta[i], tb[i]));
  return loss;
}

double perceptual_loss(const Tensor& gen, const Tensor& ref, const FeatureExtractor& fx) {
  if (gen.ndim() != 3 || gen.dim(2) != 3)
    throw ShapeError("perceptual loss image must be {h, w, 3}, got " +
                     core::shape_str(gen.shape()));
  if (gen.shape() != ref.shape())
    throw ShapeError("perceptual loss inputs must have equal shapes");
  Var a = ad::hwc_to_chw(Var(gen));
  Var b = ad::hwc_to_chw(Var(ref));
  return perceptual_loss(a, b, fx).val().at(0);
}

ExtractorTrainTrace train_feature_extractor(ConvFeatureExtractor& fx,
                                            const std::vector<media::FrameSequence>& clips,
                                            int steps, int batch, double lr,
                                            unsigned long long seed) {
  std::vector<const Tensor*> frames;
  for (const auto& clip : clips)
    for (const auto& f : clip.frames) frames.push_back(&f);
  if (frames.empty()) throw EmptyInputError("feature extractor training needs at least one frame");
  if (steps <= 0 || batch <= 0)
    throw ConfigError("feature extractor training needs positive steps and batch");

  std::vector<Var> ps;
  for (auto& [name, v] : fx.params()) ps.push_back(v);
  ad::Adam opt(ps);
  Rng rng(seed);
  ExtractorTrainTrace trace;
  trace.loss.reserve(static_cast<std::size_t>(steps));
  for (int step = 0; step < steps; ++step) {
    Var loss;
    for (int b = 0; b < batch; ++b) {
      const Tensor& f = *frames[static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(frames.size())))];
      Var img = ad::hwc_to_chw(Var(f));
      Var rec = fx.reconstruct(img);
      Var term = ad::l1_mean(rec, img);
      loss = loss.defined() ? ad::add(loss, term) : term;
    }
    loss = ad::mul_scalar(loss, 1.0 / batch);
    opt.zero_grad();
    ad::backward(loss);
    opt.step(lr);
    trace.loss.push_back(loss.val().at(0));
  }
  return trace;
}

}  // namespace font::flowgen
