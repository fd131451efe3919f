// Flow-guided frame synthesis tests: the sparse affine motion stack against
// per-pixel oracles, feature warping against index arithmetic, dense-motion
// blending contracts, full-frame generation with finite-difference gradients,
// and checkpoint round-trips.

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <functional>
#include <utility>
#include <vector>

#include "font/core/archive.hpp"
#include "font/core/errors.hpp"
#include "font/core/rng.hpp"
#include "font/flowgen/generator.hpp"
#include "test_util.hpp"

using namespace font;
using ad::Var;
using core::Rng;
using core::Tensor;
using flowgen::GeneratorConfig;
using flowgen::GeneratorModel;
using flowgen::MotionField;
using flowgen::StructureVars;
using structure::StructureRep;
using testutil::rel_err;

namespace {

double pixel_center(int i, int n) { return 2.0 * (i + 0.5) / n - 1.0; }

// Rotation-times-diagonal jacobians keep determinants well away from the
// regularization threshold.
Tensor rotation_scale_jacs(Rng& rng, int n) {
  Tensor j = Tensor::zeros({n, 2, 2});
  for (int k = 0; k < n; ++k) {
    const double th = rng.uniform(-2.8, 2.8);
    const double s0 = rng.uniform(0.6, 1.5);
    const double s1 = rng.uniform(0.6, 1.5);
    j.at(k, 0, 0) = std::cos(th) * s0;
    j.at(k, 0, 1) = -std::sin(th) * s1;
    j.at(k, 1, 0) = std::sin(th) * s0;
    j.at(k, 1, 1) = std::cos(th) * s1;
  }
  return j;
}

StructureRep random_rep(Rng& rng, int n) {
  StructureRep r;
  r.keypoints = Tensor::uniform({n, 2}, rng, -0.9, 0.9);
  r.jacobians = rotation_scale_jacs(rng, n);
  return r;
}

StructureRep identity_rep(const Tensor& keypoints) {
  StructureRep r;
  r.keypoints = keypoints;
  const int n = keypoints.dim(0);
  r.jacobians = Tensor::zeros({n, 2, 2});
  for (int k = 0; k < n; ++k) {
    r.jacobians.at(k, 0, 0) = 1.0;
    r.jacobians.at(k, 1, 1) = 1.0;
  }
  return r;
}

Tensor identity_grid(int h, int w) {
  Tensor g = Tensor::zeros({h, w, 2});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      g.at(i, j, 0) = pixel_center(j, w);
      g.at(i, j, 1) = pixel_center(i, h);
    }
  return g;
}

// Plain transcription of the per-keypoint affine field: field 0 is the
// identity grid, field k maps z to K_src + J_src J_dri^{-1} (z - K_dri).
Tensor brute_force_fields(const StructureRep& src, const StructureRep& dri, int h, int w) {
  const int n = src.keypoints.dim(0);
  Tensor out = Tensor::zeros({n + 1, h, w, 2});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      out.at(0, i, j, 0) = pixel_center(j, w);
      out.at(0, i, j, 1) = pixel_center(i, h);
    }
  for (int k = 0; k < n; ++k) {
    const double a = dri.jacobians.at(k, 0, 0), b = dri.jacobians.at(k, 0, 1);
    const double c = dri.jacobians.at(k, 1, 0), d = dri.jacobians.at(k, 1, 1);
    const double det = a * d - b * c;
    const double ia = d / det, ib = -b / det, ic = -c / det, id = a / det;
    const double m00 = src.jacobians.at(k, 0, 0) * ia + src.jacobians.at(k, 0, 1) * ic;
    const double m01 = src.jacobians.at(k, 0, 0) * ib + src.jacobians.at(k, 0, 1) * id;
    const double m10 = src.jacobians.at(k, 1, 0) * ia + src.jacobians.at(k, 1, 1) * ic;
    const double m11 = src.jacobians.at(k, 1, 0) * ib + src.jacobians.at(k, 1, 1) * id;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const double zx = pixel_center(j, w) - dri.keypoints.at(k, 0);
        const double zy = pixel_center(i, h) - dri.keypoints.at(k, 1);
        out.at(k + 1, i, j, 0) = src.keypoints.at(k, 0) + m00 * zx + m01 * zy;
        out.at(k + 1, i, j, 1) = src.keypoints.at(k, 1) + m10 * zx + m11 * zy;
      }
  }
  return out;
}

void gradcheck(std::vector<Tensor>& leaves, const std::function<Var(std::vector<Var>&)>& build,
               double tol = 1e-5, double eps = 1e-5) {
  std::vector<Var> vars;
  for (const Tensor& t : leaves) vars.emplace_back(t, true);
  Var loss = build(vars);
  ad::backward(loss);

  auto eval = [&] {
    std::vector<Var> vs;
    for (const Tensor& t : leaves) vs.emplace_back(t, false);
    return build(vs).val()[0];
  };

  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor& leaf = leaves[li];
    for (std::size_t i = 0; i < leaf.numel(); ++i) {
      const double fd = testutil::central_diff(leaf.raw(), i, eval, eps);
      const double an = vars[li].grad()[i];
      INFO("leaf ", li, " entry ", i, " analytic ", an, " fd ", fd);
      CHECK(rel_err(an, fd, 1e-4) < tol);
    }
  }
}

}  // namespace

TEST_CASE("sparse motion reproduces identity, translation, and scaling exactly") {
  Rng rng(31);
  const int n = 4, h = 8, w = 8;
  const Tensor grid = identity_grid(h, w);

  // Source and driving agree with identity jacobians: every field is the grid.
  Tensor kp = Tensor::uniform({n, 2}, rng, -0.8, 0.8);
  Tensor same = flowgen::sparse_motion(identity_rep(kp), identity_rep(kp), h, w);
  for (int k = 0; k <= n; ++k)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        CHECK(std::fabs(same.at(k, i, j, 0) - grid.at(i, j, 0)) < 1e-7);
        CHECK(std::fabs(same.at(k, i, j, 1) - grid.at(i, j, 1)) < 1e-7);
      }

  // Pure translation: source keypoints offset from driving by a constant.
  const double dx = 0.25, dy = -0.125;
  Tensor kp_dri = Tensor::uniform({n, 2}, rng, -0.6, 0.6);
  Tensor kp_src = kp_dri;
  for (int k = 0; k < n; ++k) {
    kp_src.at(k, 0) += dx;
    kp_src.at(k, 1) += dy;
  }
  Tensor trans = flowgen::sparse_motion(identity_rep(kp_src), identity_rep(kp_dri), h, w);
  for (int k = 1; k <= n; ++k)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        CHECK(std::fabs(trans.at(k, i, j, 0) - (grid.at(i, j, 0) + dx)) < 1e-7);
        CHECK(std::fabs(trans.at(k, i, j, 1) - (grid.at(i, j, 1) + dy)) < 1e-7);
      }

  // Pure scaling: shared keypoint at the origin, source jacobian twice the
  // driving one, so the field doubles every coordinate.
  StructureRep src_scale = identity_rep(Tensor::zeros({n, 2}));
  for (int k = 0; k < n; ++k) {
    src_scale.jacobians.at(k, 0, 0) = 2.0;
    src_scale.jacobians.at(k, 1, 1) = 2.0;
  }
  Tensor scaled = flowgen::sparse_motion(src_scale, identity_rep(Tensor::zeros({n, 2})), h, w);
  for (int k = 1; k <= n; ++k)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        CHECK(std::fabs(scaled.at(k, i, j, 0) - 2.0 * grid.at(i, j, 0)) < 1e-7);
        CHECK(std::fabs(scaled.at(k, i, j, 1) - 2.0 * grid.at(i, j, 1)) < 1e-7);
      }
}

TEST_CASE("sparse motion matches a per-pixel brute force on random pairs") {
  Rng rng(87);
  const int n = 6, h = 8, w = 8;
  for (int trial = 0; trial < 20; ++trial) {
    StructureRep src = random_rep(rng, n);
    StructureRep dri = random_rep(rng, n);
    Tensor got = flowgen::sparse_motion(src, dri, h, w);
    Tensor want = brute_force_fields(src, dri, h, w);
    REQUIRE(got.shape() == want.shape());
    double worst = 0.0;
    for (std::size_t i = 0; i < got.numel(); ++i)
      worst = std::max(worst, std::fabs(got[i] - want[i]));
    INFO("trial ", trial, " worst deviation ", worst);
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("sparse motion is equivariant to a shared keypoint translation") {
  Rng rng(55);
  const int n = 3, h = 16, w = 16;
  // Shift both keypoint sets by an exact number of pixels so shifted grid
  // locations land on other pixel centers.
  const int px = 2, py = 3;
  const double dx = px * 2.0 / w, dy = py * 2.0 / h;

  StructureRep src = random_rep(rng, n);
  StructureRep dri = random_rep(rng, n);
  for (int k = 0; k < n; ++k) {  // keep shifted keypoints inside [-1, 1]
    src.keypoints.at(k, 0) = rng.uniform(-0.9, 0.5);
    src.keypoints.at(k, 1) = rng.uniform(-0.9, 0.5);
    dri.keypoints.at(k, 0) = rng.uniform(-0.9, 0.5);
    dri.keypoints.at(k, 1) = rng.uniform(-0.9, 0.5);
  }
  StructureRep src_s = src, dri_s = dri;
  for (int k = 0; k < n; ++k) {
    src_s.keypoints.at(k, 0) += dx;
    src_s.keypoints.at(k, 1) += dy;
    dri_s.keypoints.at(k, 0) += dx;
    dri_s.keypoints.at(k, 1) += dy;
  }

  Tensor base = flowgen::sparse_motion(src, dri, h, w);
  Tensor shifted = flowgen::sparse_motion(src_s, dri_s, h, w);
  // T_shifted(z + d) == T(z) + d, so at pixel (i, j) the shifted stack equals
  // the base stack at (i - py, j - px) plus the offset.
  for (int k = 1; k <= n; ++k)
    for (int i = py; i < h; ++i)
      for (int j = px; j < w; ++j) {
        CHECK(std::fabs(shifted.at(k, i, j, 0) - (base.at(k, i - py, j - px, 0) + dx)) < 1e-7);
        CHECK(std::fabs(shifted.at(k, i, j, 1) - (base.at(k, i - py, j - px, 1) + dy)) < 1e-7);
      }
}

TEST_CASE("sparse motion reports singular driving jacobians by index") {
  Rng rng(12);
  StructureRep src = random_rep(rng, 3);
  StructureRep dri = random_rep(rng, 3);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) dri.jacobians.at(1, a, b) = 0.0;
  try {
    flowgen::sparse_motion(src, dri, 8, 8);
    FAIL("expected SingularityError");
  } catch (const SingularityError& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }

  StructureRep fewer = random_rep(rng, 2);
  CHECK_THROWS_AS(flowgen::sparse_motion(src, fewer, 8, 8), ShapeError);
  CHECK_THROWS_AS(flowgen::sparse_motion(src, dri, 0, 8), ShapeError);
}

TEST_CASE("feature warping matches index arithmetic") {
  Rng rng(71);

  // Identity flow returns the input.
  Tensor f = Tensor::uniform({3, 8, 8}, rng, 0.0, 1.0);
  Tensor warped = flowgen::warp_features(f, identity_grid(8, 8));
  for (std::size_t i = 0; i < f.numel(); ++i) CHECK(std::fabs(warped[i] - f[i]) < 1e-6);

  // Constant images are fixed points of any warp (border clamp included).
  Tensor c = Tensor::zeros({2, 6, 6});
  c.fill(0.7);
  Tensor wild = Tensor::uniform({6, 6, 2}, rng, -1.4, 1.4);
  Tensor warped_c = flowgen::warp_features(c, wild);
  for (std::size_t i = 0; i < warped_c.numel(); ++i) CHECK(std::fabs(warped_c[i] - 0.7) < 1e-6);

  // A one-pixel displacement in x reproduces an index shift away from the
  // border: sampling at z + 2/w picks up the next column.
  Tensor img = Tensor::uniform({1, 8, 8}, rng, 0.0, 1.0);
  Tensor shift = identity_grid(8, 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) shift.at(i, j, 0) += 2.0 / 8;
  Tensor shifted = flowgen::warp_features(img, shift);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 7; ++j) {
      INFO("row ", i, " col ", j);
      CHECK(std::fabs(shifted.at(0, i, j) - img.at(0, i, j + 1)) < 1e-5);
    }

  CHECK_THROWS_AS(flowgen::warp_features(f, Tensor::zeros({4, 4, 2})), ShapeError);
  CHECK_THROWS_AS(flowgen::warp_features(Tensor::zeros({8, 8}), identity_grid(8, 8)),
                  ShapeError);
}

TEST_CASE("warping by two translations composes to their sum on smooth images") {
  const int h = 32, w = 32;
  // Bilinear sampling reproduces bilinear functions exactly and keeps the
  // interpolation error of the quadratic terms below a few 1e-5.
  Tensor img = Tensor::zeros({1, h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double x = pixel_center(j, w), y = pixel_center(i, h);
      img.at(0, i, j) = 0.5 + 0.2 * x + 0.3 * y + 0.05 * x * y + 0.02 * x * x + 0.03 * y * y;
    }
  const double t1x = 0.037, t1y = -0.021, t2x = -0.049, t2y = 0.033;
  Tensor g1 = identity_grid(h, w), g2 = identity_grid(h, w), g12 = identity_grid(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      g1.at(i, j, 0) += t1x;
      g1.at(i, j, 1) += t1y;
      g2.at(i, j, 0) += t2x;
      g2.at(i, j, 1) += t2y;
      g12.at(i, j, 0) += t1x + t2x;
      g12.at(i, j, 1) += t1y + t2y;
    }
  Tensor two_step = flowgen::warp_features(flowgen::warp_features(img, g1), g2);
  Tensor one_step = flowgen::warp_features(img, g12);
  for (int i = 3; i < h - 3; ++i)
    for (int j = 3; j < w - 3; ++j) {
      INFO("row ", i, " col ", j);
      CHECK(std::fabs(two_step.at(0, i, j) - one_step.at(0, i, j)) < 1e-4);
    }
}

TEST_CASE("dense motion yields a normalized blend and a bounded occlusion map") {
  GeneratorConfig cfg;
  cfg.n_keypoints = 4;
  cfg.base_channels = 8;
  GeneratorModel model(cfg);
  Rng rng(9);
  Tensor img = Tensor::uniform({16, 16, 3}, rng, 0.0, 1.0);
  StructureRep src = random_rep(rng, 4), dri = random_rep(rng, 4);
  Tensor fields = flowgen::sparse_motion(src, dri, 4, 4);

  MotionField md = flowgen::dense_motion(model, img, fields, src, dri);
  REQUIRE(md.flow_mask.shape() == core::Shape{5, 4, 4});
  REQUIRE(md.occlusion.shape() == core::Shape{1, 4, 4});
  REQUIRE(md.flow.shape() == core::Shape{4, 4, 2});

  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double sum = 0.0;
      for (int k = 0; k < 5; ++k) {
        const double m = md.flow_mask.at(k, i, j);
        CHECK(m >= 0.0);
        CHECK(m <= 1.0);
        sum += m;
      }
      CHECK(std::fabs(sum - 1.0) < 1e-6);
      const double occ = md.occlusion.at(0, i, j);
      CHECK(occ >= 0.0);
      CHECK(occ <= 1.0);
    }
  for (std::size_t i = 0; i < md.flow.numel(); ++i) CHECK(std::isfinite(md.flow[i]));

  CHECK_THROWS_AS(flowgen::dense_motion(model, img, Tensor::zeros({5, 3, 3, 2}), src, dri),
                  ShapeError);
}

TEST_CASE("a background-dominated mask blends to the identity flow") {
  GeneratorConfig cfg;
  cfg.n_keypoints = 4;
  cfg.base_channels = 8;
  GeneratorModel model(cfg);
  // Force the mask head to put (numerically) all weight on field 0.
  for (auto& [name, var] : model.params()) {
    if (name == "generator/dense_motion/mask/w") var.node()->value.fill(0.0);
    if (name == "generator/dense_motion/mask/b") {
      Tensor& b = var.node()->value;
      for (std::size_t i = 0; i < b.numel(); ++i) b.at(static_cast<int>(i)) = i == 0 ? 50.0 : -50.0;
    }
  }
  Rng rng(21);
  Tensor img = Tensor::uniform({16, 16, 3}, rng, 0.0, 1.0);
  StructureRep src = random_rep(rng, 4), dri = random_rep(rng, 4);
  Tensor fields = flowgen::sparse_motion(src, dri, 4, 4);
  MotionField md = flowgen::dense_motion(model, img, fields, src, dri);
  Tensor grid = identity_grid(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      CHECK(std::fabs(md.flow.at(i, j, 0) - grid.at(i, j, 0)) < 1e-6);
      CHECK(std::fabs(md.flow.at(i, j, 1) - grid.at(i, j, 1)) < 1e-6);
    }
}

TEST_CASE("occlusion gating never increases feature magnitudes") {
  GeneratorConfig cfg;
  cfg.n_keypoints = 5;
  cfg.base_channels = 8;
  GeneratorModel model(cfg);
  Rng rng(40);
  Tensor img = Tensor::uniform({16, 16, 3}, rng, 0.0, 1.0);
  StructureRep src = random_rep(rng, 5), dri = random_rep(rng, 5);
  flowgen::GeneratedFrame g = model.generate_vars(
      img, {Var(src.keypoints), Var(src.jacobians)}, {Var(dri.keypoints), Var(dri.jacobians)});
  const Tensor& warped = g.warped_features.val();
  const Tensor& occluded = g.occluded_features.val();
  REQUIRE(warped.shape() == occluded.shape());
  for (std::size_t i = 0; i < warped.numel(); ++i)
    CHECK(std::fabs(occluded[i]) <= std::fabs(warped[i]) + 1e-12);
}

TEST_CASE("generated frames keep the source resolution and stay in range") {
  GeneratorConfig cfg;
  cfg.n_keypoints = 4;
  cfg.base_channels = 8;
  GeneratorModel model(cfg);
  Rng rng(66);
  Tensor img = Tensor::uniform({16, 16, 3}, rng, 0.0, 1.0);
  StructureRep src = random_rep(rng, 4), dri = random_rep(rng, 4);

  Tensor out = flowgen::generate_frame(model, img, src, dri);
  REQUIRE(out.shape() == img.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    CHECK(out[i] >= 0.0);
    CHECK(out[i] <= 1.0);
  }

  Tensor again = flowgen::generate_frame(model, img, src, dri);
  CHECK(testutil::bitwise_equal(out.raw(), again.raw()));

  CHECK_THROWS_AS(flowgen::generate_frame(model, Tensor::zeros({15, 16, 3}), src, dri),
                  ShapeError);
  CHECK_THROWS_AS(flowgen::generate_frame(model, Tensor::zeros({16, 16, 1}), src, dri),
                  ShapeError);
  StructureRep fewer = random_rep(rng, 3);
  CHECK_THROWS_AS(flowgen::generate_frame(model, img, src, fewer), ShapeError);
}

TEST_CASE("frame synthesis gradients match finite differences") {
  GeneratorConfig cfg;
  cfg.n_keypoints = 3;
  cfg.base_channels = 6;
  GeneratorModel model(cfg);
  Rng rng(101);
  Tensor img = Tensor::uniform({16, 16, 3}, rng, 0.05, 0.95);

  // Generic keypoint positions keep the finite-difference probes away from
  // the bilinear sampling creases.
  std::vector<Tensor> leaves;
  Tensor kp_s = Tensor::uniform({3, 2}, rng, -0.63, 0.59);
  Tensor kp_d = Tensor::uniform({3, 2}, rng, -0.61, 0.57);
  leaves.push_back(kp_s);
  leaves.push_back(rotation_scale_jacs(rng, 3));
  leaves.push_back(kp_d);
  leaves.push_back(rotation_scale_jacs(rng, 3));

  auto build = [&](std::vector<Var>& vs) {
    flowgen::GeneratedFrame g = model.generate_vars(img, {vs[0], vs[1]}, {vs[2], vs[3]});
    return ad::mean(g.frame);
  };
  gradcheck(leaves, build, 1e-3, 1e-5);

  // The same graph must reach the generator weights.
  std::vector<Var> vs;
  for (const Tensor& t : leaves) vs.emplace_back(t, false);
  flowgen::GeneratedFrame g = model.generate_vars(img, {vs[0], vs[1]}, {vs[2], vs[3]});
  ad::backward(ad::mean(g.frame));
  double wnorm = 0.0;
  for (auto& [name, var] : model.params())
    if (name == "generator/encoder/c0/w")
      for (std::size_t i = 0; i < var.grad().numel(); ++i) wnorm += std::fabs(var.grad()[i]);
  CHECK(wnorm > 0.0);
}

TEST_CASE("generator checkpoints round-trip bitwise") {
  GeneratorConfig cfg;
  cfg.n_keypoints = 4;
  cfg.base_channels = 8;
  cfg.init_seed = 77;
  GeneratorModel model(cfg);
  Rng rng(13);
  Tensor img = Tensor::uniform({16, 16, 3}, rng, 0.0, 1.0);
  StructureRep src = random_rep(rng, 4), dri = random_rep(rng, 4);
  Tensor before = flowgen::generate_frame(model, img, src, dri);

  const std::string path = "flowgen_ckpt_test.bin";
  model.save(path);
  GeneratorModel loaded = GeneratorModel::load(path);
  std::remove(path.c_str());

  CHECK(loaded.config().n_keypoints == cfg.n_keypoints);
  CHECK(loaded.config().base_channels == cfg.base_channels);

  auto a = model.params();
  auto b = loaded.params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(testutil::bitwise_equal(a[i].second.val().raw(), b[i].second.val().raw()));
  }

  Tensor after = flowgen::generate_frame(loaded, img, src, dri);
  CHECK(testutil::bitwise_equal(before.raw(), after.raw()));

  core::Archive ar = model.to_archive();
  CHECK(ar.stage == "generator");
  for (const char* key :
       {"generator/encoder/c0/w", "generator/encoder/c1/w", "generator/dense_motion/e0/w",
        "generator/dense_motion/d0/w", "generator/dense_motion/u0/w",
        "generator/dense_motion/mask/w", "generator/dense_motion/occ/w",
        "generator/decoder/c0/w", "generator/decoder/c1/w", "generator/decoder/c2/w"})
    CHECK(ar.has(key));

  ar.stage = "pose";
  CHECK_THROWS_AS(GeneratorModel::from_archive(ar), StageMismatchError);

  core::Archive tampered = model.to_archive();
  tampered.put("generator/encoder/c0/w", Tensor::zeros({2, 2}));
  CHECK_THROWS_AS(GeneratorModel::from_archive(tampered), IntegrityError);

  GeneratorConfig rt = GeneratorConfig::from_json(cfg.to_json());
  CHECK(rt.n_keypoints == cfg.n_keypoints);
  CHECK(rt.base_channels == cfg.base_channels);
  CHECK(rt.heatmap_sigma == cfg.heatmap_sigma);
  CHECK(rt.init_seed == cfg.init_seed);
  CHECK_THROWS_AS(GeneratorConfig::from_json("{\"n_keypoints\": -2}"), ConfigError);
}
