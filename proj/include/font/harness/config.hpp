#pragma once

// Experiment configuration: one hierarchical JSON document covering the
// synthetic corpus, every model, and every training stage, with environment
// overrides (FONT_ prefix, double underscore for nesting) applied on load.
// parse(serialize(x)) == x, and hash() fingerprints the canonical form so
// checkpoints can refuse to resume under a different configuration.

#include <cstdint>
#include <string>

#include "font/flowgen/generator.hpp"
#include "font/flowgen/perceptual.hpp"
#include "font/flowgen/sync.hpp"
#include "font/pose/cvae.hpp"
#include "font/structure/predictor.hpp"

namespace font::harness {

// Paper learning-rate schedule: 2e-4 at step 0 falling linearly to 2e-5 at
// step == total. Steps outside [0, total] are a RangeError.
double lr_schedule(long long step, long long total);

// The stage schedules interpolate their own endpoints the same way.
double lr_linear(double lr0, double lr1, long long step, long long total);

// Per-stage optimizer budget. Endpoint defaults are desk-scaled per stage;
// the paper's own endpoints live in lr_schedule.
struct StageHyper {
  int steps = 300;
  int batch = 8;
  double lr0 = 2e-3;
  double lr1 = 2e-4;
};

// Synthetic corpus layout: where shards live and how they were rendered.
// The trailing `holdout` shards are reserved for evaluation.
struct DataConfig {
  std::string dir = "data/synth";
  int clips = 40;
  int frames = 50;
  int size = 48;
  int n_keypoints = 10;
  int base_seed = 1000;
  int holdout = 8;
};

struct ExperimentConfig {
  unsigned long long seed = 7;
  std::string ckpt_dir = "ckpt";
  DataConfig data;

  // Pose stage. disc_lr_scale multiplies the stage schedule for the critic;
  // sample_temperature scales prior draws at inference.
  pose::PoseCvaeConfig pose;
  StageHyper pose_train;
  double pose_disc_lr_scale = 0.25;
  double sample_temperature = 1.0;

  // Keypoint distillation stage. window bounds the rollout length per step.
  structure::KeypointPredictorConfig structure;
  StageHyper structure_train;
  int structure_window = 25;

  // Joint generator stage: reconstruction + perceptual + sync shaping +
  // distillation anchor on the fine-tuned predictor. use_sync_disc = false
  // drops the sync term (lambda_sync treated as 0).
  flowgen::GeneratorConfig generator;
  StageHyper generator_train;
  double lambda_l1 = 10.0;
  double lambda_perceptual = 1.0;
  double lambda_sync = 1.0;
  double lambda_distill = 1.0;
  bool use_sync_disc = true;

  // Perceptual feature extractor (trained inside the generator stage when
  // its checkpoint is absent).
  flowgen::ConvExtractorConfig features;
  StageHyper features_train;

  // Sync embedder stage.
  flowgen::SyncEmbedderConfig sync;
  flowgen::SyncTrainConfig sync_train;

  std::string to_json() const;  // canonical: sorted keys, 2-space indent
  static ExperimentConfig from_json(const std::string& text);

  // Reads the file (ConfigError when unreadable), then applies FONT_*
  // environment overrides. An empty path starts from defaults.
  static ExperimentConfig load(const std::string& path, bool apply_env = true);

  std::uint64_t hash() const;  // FNV-1a of the canonical serialization

  bool operator==(const ExperimentConfig& other) const { return to_json() == other.to_json(); }
};

// Applies FONT_ environment overrides onto a JSON document in place:
// FONT_POSE__D_Z=8 sets doc["pose"]["d_z"] = 8. Values parse as JSON when
// possible and fall back to strings. Exposed for tests.
std::string apply_env_overrides(const std::string& json_text);

}  // namespace font::harness
