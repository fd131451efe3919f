#pragma once

#include <string>
#include <utility>
#include <vector>

#include "font/core/archive.hpp"
#include "font/core/autodiff.hpp"
#include "font/core/tensor.hpp"
#include "font/nn/layers.hpp"
#include "font/structure/teacher.hpp"

namespace font::flowgen {

using core::Tensor;

// Dense motion estimate at quarter resolution: a combined backward flow map
// (normalized coordinates, same convention as the sampling grid), the softmax
// weights that blended the per-keypoint fields, and an occlusion map in [0,1].
struct MotionField {
  Tensor flow;       // {h, w, 2}
  Tensor flow_mask;  // {n_keypoints + 1, h, w}, sums to 1 over fields
  Tensor occlusion;  // {1, h, w} in [0, 1]
};

// Var-valued twin of MotionField used inside training graphs.
struct MotionFieldVars {
  ad::Var flow;
  ad::Var flow_mask;
  ad::Var occlusion;
};

// Keypoints/jacobians as graph nodes so frame synthesis can propagate
// gradients back into the structure predictor during joint training.
struct StructureVars {
  ad::Var keypoints;  // {n, 2}
  ad::Var jacobians;  // {n, 2, 2}
};

struct GeneratorConfig {
  int n_keypoints = 10;
  int base_channels = 16;     // encoder first-layer width; feature maps use 2x
  double heatmap_sigma = 0.1; // gaussian width for keypoint heatmaps
  unsigned long long init_seed = 0x6e71;

  std::string to_json() const;
  static GeneratorConfig from_json(const std::string& text);
};

// Everything generate_vars produces; intermediate taps are exposed so tests
// can check the occlusion contraction property without re-running the graph.
struct GeneratedFrame {
  ad::Var frame;     // {3, h, w} in [0, 1]
  MotionFieldVars motion;
  ad::Var features;          // encoder output {2c, h/2, w/2}
  ad::Var warped_features;   // after backward warping
  ad::Var occluded_features; // after occlusion gating
};

// Flow-guided frame synthesis network. The encoder maps the source image to
// half-resolution features, the dense-motion hourglass predicts how to blend
// the per-keypoint sparse fields at quarter resolution, and the decoder turns
// the warped, occlusion-gated features back into an image.
class GeneratorModel {
 public:
  explicit GeneratorModel(const GeneratorConfig& cfg);

  const GeneratorConfig& config() const { return cfg_; }

  // Full synthesis graph. src_img is {h, w, 3} in [0, 1] with h, w divisible
  // by 4 and at least 8. Structure inputs must carry cfg.n_keypoints entries.
  GeneratedFrame generate_vars(const Tensor& src_img, const StructureVars& src,
                               const StructureVars& dri) const;

  // Dense motion sub-network on a precomputed sparse field stack
  // ({n+1, h/4, w/4, 2}); exposed so the motion estimate can be inspected
  // and tested in isolation.
  MotionFieldVars dense_motion_vars(const Tensor& src_img, const ad::Var& fields,
                                    const StructureVars& src,
                                    const StructureVars& dri) const;

  nn::ParamMap params() const;

  core::Archive to_archive() const;
  void save(const std::string& path) const;
  static GeneratorModel from_archive(const core::Archive& ar);
  static GeneratorModel load(const std::string& path);

 private:
  GeneratorConfig cfg_;
  // encoder
  nn::Conv2d enc_c0_, enc_c1_;
  // dense-motion hourglass
  nn::Conv2d dm_e0_, dm_d0_, dm_u0_, dm_mask_, dm_occ_;
  // decoder
  nn::Conv2d dec_c0_, dec_c1_, dec_c2_;
};

// Stack of per-keypoint backward coordinate fields evaluated on the pixel
// grid of an (h, w) image: field 0 is the identity grid, field k >= 1 maps
// driving-frame coordinates z to K_src^k + J_src^k (J_dri^k)^-1 (z - K_dri^k).
// Throws SingularityError if a driving jacobian cannot be inverted even after
// regularization, and ShapeError on keypoint-count mismatches.
Tensor sparse_motion(const structure::StructureRep& src, const structure::StructureRep& dri,
                     int h, int w);

// Value-level dense motion: blends precomputed sparse fields with the model's
// predicted mask and returns the combined flow, mask, and occlusion map.
// fields must be {n+1, h/4, w/4, 2} matching src_img's quarter resolution.
MotionField dense_motion(const GeneratorModel& model, const Tensor& src_img,
                         const Tensor& fields, const structure::StructureRep& src,
                         const structure::StructureRep& dri);

// Backward-warps a feature map by a normalized-coordinate flow of the same
// spatial size, bilinear with border clamping. features {c, h, w},
// flow {h, w, 2} -> {c, h, w}.
Tensor warp_features(const Tensor& features, const Tensor& flow);
ad::Var warp_features(const ad::Var& features, const ad::Var& flow);

// One-shot synthesis: returns the generated frame as {h, w, 3} in [0, 1].
Tensor generate_frame(const GeneratorModel& model, const Tensor& src_img,
                      const structure::StructureRep& src, const structure::StructureRep& dri);

}  // namespace font::flowgen
