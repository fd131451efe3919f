#include "font/flowgen/generator.hpp"

#include <cmath>
#include <utility>

#include <nlohmann/json.hpp>

#include "font/core/errors.hpp"

namespace font::flowgen {

using ad::Var;
using core::Rng;
using json = nlohmann::json;

std::string GeneratorConfig::to_json() const {
  json j;
  j["n_keypoints"] = n_keypoints;
  j["base_channels"] = base_channels;
  j["heatmap_sigma"] = heatmap_sigma;
  j["init_seed"] = init_seed;
  return j.dump();
}

GeneratorConfig GeneratorConfig::from_json(const std::string& text) {
  GeneratorConfig c;
  try {
    json j = json::parse(text);
    c.n_keypoints = j.value("n_keypoints", c.n_keypoints);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.heatmap_sigma = j.value("heatmap_sigma", c.heatmap_sigma);
    c.init_seed = j.value("init_seed", c.init_seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
  if (c.n_keypoints <= 0) throw ConfigError("generator config: n_keypoints must be positive");
  if (c.base_channels <= 0) throw ConfigError("generator config: base_channels must be positive");
  if (!(c.heatmap_sigma > 0.0)) throw ConfigError("generator config: heatmap_sigma must be positive");
  return c;
}

namespace {

void check_source_image(const Tensor& img) {
  if (img.ndim() != 3 || img.dim(2) != 3)
    throw ShapeError("source image must be {h, w, 3}, got " + core::shape_str(img.shape()));
  const int h = img.dim(0), w = img.dim(1);
  if (h < 8 || w < 8 || h % 4 != 0 || w % 4 != 0)
    throw ShapeError("source image sides must be multiples of 4 and at least 8, got " +
                     core::shape_str(img.shape()));
}

void check_structure_vars(const StructureVars& s, int n, const char* which) {
  const auto& ks = s.keypoints.shape();
  const auto& js = s.jacobians.shape();
  if (ks.size() != 2 || ks[0] != n || ks[1] != 2)
    throw ShapeError(std::string(which) + " keypoints must be {" + std::to_string(n) + ", 2}");
  if (js.size() != 3 || js[0] != n || js[1] != 2 || js[2] != 2)
    throw ShapeError(std::string(which) + " jacobians must be {" + std::to_string(n) + ", 2, 2}");
}

StructureVars as_vars(const structure::StructureRep& rep) {
  rep.validate();
  return {Var(rep.keypoints), Var(rep.jacobians)};
}

}  // namespace

GeneratorModel::GeneratorModel(const GeneratorConfig& cfg) : cfg_(cfg) {
  Rng rng(cfg_.init_seed);
  const int c = cfg_.base_channels;
  const int nf = cfg_.n_keypoints + 1;  // sparse fields incl. background
  enc_c0_ = nn::Conv2d(3, c, 3, 1, 1, rng);
  enc_c1_ = nn::Conv2d(c, 2 * c, 3, 2, 1, rng);
  dm_e0_ = nn::Conv2d(4 * nf, 2 * c, 3, 1, 1, rng);
  dm_d0_ = nn::Conv2d(2 * c, 4 * c, 3, 1, 1, rng);
  dm_u0_ = nn::Conv2d(6 * c, 2 * c, 3, 1, 1, rng);
  dm_mask_ = nn::Conv2d(2 * c, nf, 3, 1, 1, rng);
  dm_occ_ = nn::Conv2d(2 * c, 1, 3, 1, 1, rng);
  dec_c0_ = nn::Conv2d(2 * c, 2 * c, 3, 1, 1, rng);
  dec_c1_ = nn::Conv2d(2 * c, c, 3, 1, 1, rng);
  dec_c2_ = nn::Conv2d(c, 3, 3, 1, 1, rng);
}

MotionFieldVars GeneratorModel::dense_motion_vars(const Tensor& src_img, const Var& fields,
                                                  const StructureVars& src,
                                                  const StructureVars& dri) const {
  check_source_image(src_img);
  const int n = cfg_.n_keypoints;
  check_structure_vars(src, n, "source");
  check_structure_vars(dri, n, "driving");
  const int hq = src_img.dim(0) / 4, wq = src_img.dim(1) / 4;
  const auto& fs = fields.shape();
  if (fs.size() != 4 || fs[0] != n + 1 || fs[1] != hq || fs[2] != wq || fs[3] != 2)
    throw ShapeError("sparse fields must be {" + std::to_string(n + 1) + ", " +
                     std::to_string(hq) + ", " + std::to_string(wq) + ", 2}, got " +
                     core::shape_str(fs));

  // Per-field evidence: how the keypoint's neighborhood moved (heatmap
  // difference) and what the source looks like after that field's warp.
  Var x = ad::hwc_to_chw(Var(src_img));
  Var src_q = ad::resize_bilinear(x, hq, wq);
  Var heat_src = ad::gaussian_heatmap(src.keypoints, hq, wq, cfg_.heatmap_sigma);
  Var heat_dri = ad::gaussian_heatmap(dri.keypoints, hq, wq, cfg_.heatmap_sigma);
  Var heat_diff = ad::sub(heat_dri, heat_src);

  std::vector<Var> blocks;
  blocks.reserve(static_cast<std::size_t>(n) + 1);
  // Field 0 (background): no keypoint evidence, unwarped source.
  blocks.push_back(ad::concat0({Var(Tensor::zeros({1, hq, wq})), src_q}));
  for (int k = 0; k < n; ++k) {
    Var hm = ad::slice0(heat_diff, k, 1);
    Var grid = ad::reshape(ad::slice0(fields, k + 1, 1), {hq, wq, 2});
    Var warped = ad::grid_sample(src_q, grid);
    blocks.push_back(ad::concat0({hm, warped}));
  }
  Var dm_in = ad::concat0(blocks);  // {4*(n+1), hq, wq}

  // Hourglass with one skip connection.
  Var e0 = ad::relu(dm_e0_.forward(dm_in));
  Var d0 = ad::relu(dm_d0_.forward(ad::avg_pool2(e0)));
  Var up = ad::resize_bilinear(d0, hq, wq);
  Var u0 = ad::relu(dm_u0_.forward(ad::concat0({up, e0})));

  MotionFieldVars out;
  out.flow_mask = ad::softmax0(dm_mask_.forward(u0));
  out.occlusion = ad::sigmoid(dm_occ_.forward(u0));
  out.flow = ad::flow_combine(out.flow_mask, fields);
  return out;
}

GeneratedFrame GeneratorModel::generate_vars(const Tensor& src_img, const StructureVars& src,
                                             const StructureVars& dri) const {
  check_source_image(src_img);
  const int h = src_img.dim(0), w = src_img.dim(1);
  const int hh = h / 2, wh = w / 2, hq = h / 4, wq = w / 4;

  Var fields = ad::sparse_motion(src.keypoints, src.jacobians, dri.keypoints, dri.jacobians,
                                 hq, wq);

  GeneratedFrame out;
  out.motion = dense_motion_vars(src_img, fields, src, dri);

  Var x = ad::hwc_to_chw(Var(src_img));
  out.features = ad::relu(enc_c1_.forward(ad::relu(enc_c0_.forward(x))));

  // Motion lives at quarter resolution; lift it to the feature resolution.
  Var flow_half =
      ad::chw_to_hwc(ad::resize_bilinear(ad::hwc_to_chw(out.motion.flow), hh, wh));
  Var occ_half = ad::resize_bilinear(out.motion.occlusion, hh, wh);

  out.warped_features = ad::grid_sample(out.features, flow_half);
  out.occluded_features = ad::mul_bcast0(out.warped_features, occ_half);

  Var y = ad::relu(dec_c0_.forward(out.occluded_features));
  y = ad::resize_bilinear(y, h, w);
  y = ad::relu(dec_c1_.forward(y));
  out.frame = ad::sigmoid(dec_c2_.forward(y));
  return out;
}

nn::ParamMap GeneratorModel::params() const {
  nn::ParamMap out;
  enc_c0_.collect("generator/encoder/c0", out);
  enc_c1_.collect("generator/encoder/c1", out);
  dm_e0_.collect("generator/dense_motion/e0", out);
  dm_d0_.collect("generator/dense_motion/d0", out);
  dm_u0_.collect("generator/dense_motion/u0", out);
  dm_mask_.collect("generator/dense_motion/mask", out);
  dm_occ_.collect("generator/dense_motion/occ", out);
  dec_c0_.collect("generator/decoder/c0", out);
  dec_c1_.collect("generator/decoder/c1", out);
  dec_c2_.collect("generator/decoder/c2", out);
  return out;
}

core::Archive GeneratorModel::to_archive() const {
  core::Archive ar;
  ar.stage = "generator";
  ar.config_json = cfg_.to_json();
  for (const auto& [name, var] : params()) ar.put(name, var.val());
  return ar;
}

void GeneratorModel::save(const std::string& path) const { to_archive().save(path); }

GeneratorModel GeneratorModel::from_archive(const core::Archive& ar) {
  if (ar.stage != "generator")
    throw StageMismatchError("expected a generator archive, found stage '" + ar.stage + "'");
  GeneratorModel m(GeneratorConfig::from_json(ar.config_json));
  for (auto& [name, var] : m.params()) {
    Tensor t = ar.tensor(name);
    if (t.shape() != var.shape())
      throw IntegrityError("parameter '" + name + "' has shape " + core::shape_str(t.shape()) +
                           ", model expects " + core::shape_str(var.shape()));
    var.node()->value = std::move(t);
  }
  return m;
}

GeneratorModel GeneratorModel::load(const std::string& path) {
  return from_archive(core::Archive::load(path));
}

Tensor sparse_motion(const structure::StructureRep& src, const structure::StructureRep& dri,
                     int h, int w) {
  src.validate();
  dri.validate();
  if (src.count() != dri.count())
    throw ShapeError("source and driving keypoint counts differ: " +
                     std::to_string(src.count()) + " vs " + std::to_string(dri.count()));
  if (h <= 0 || w <= 0) throw ShapeError("sparse motion grid must be non-empty");
  Var f = ad::sparse_motion(Var(src.keypoints), Var(src.jacobians), Var(dri.keypoints),
                            Var(dri.jacobians), h, w);
  return f.val();
}

MotionField dense_motion(const GeneratorModel& model, const Tensor& src_img,
                         const Tensor& fields, const structure::StructureRep& src,
                         const structure::StructureRep& dri) {
  MotionFieldVars v = model.dense_motion_vars(src_img, Var(fields), as_vars(src), as_vars(dri));
  return {v.flow.val(), v.flow_mask.val(), v.occlusion.val()};
}

Var warp_features(const Var& features, const Var& flow) {
  const auto& fs = features.shape();
  const auto& gs = flow.shape();
  if (fs.size() != 3) throw ShapeError("features must be {c, h, w}");
  if (gs.size() != 3 || gs[2] != 2 || gs[0] != fs[1] || gs[1] != fs[2])
    throw ShapeError("flow must be {h, w, 2} matching the feature map, got " +
                     core::shape_str(gs));
  return ad::grid_sample(features, flow);
}

Tensor warp_features(const Tensor& features, const Tensor& flow) {
  return warp_features(Var(features), Var(flow)).val();
}

Tensor generate_frame(const GeneratorModel& model, const Tensor& src_img,
                      const structure::StructureRep& src, const structure::StructureRep& dri) {
  GeneratedFrame g = model.generate_vars(src_img, as_vars(src), as_vars(dri));
  return ad::chw_to_hwc(g.frame).val();
}

}  // namespace font::flowgen
