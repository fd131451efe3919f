#include "font/harness/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "font/core/errors.hpp"
#include "font/core/hash.hpp"

#include "json.hpp"

extern char** environ;

namespace font::harness {

using nlohmann::json;

double lr_linear(double lr0, double lr1, long long step, long long total) {
  if (total <= 0) throw RangeError("schedule length must be positive, got " + std::to_string(total));
  if (step < 0 || step > total)
    throw RangeError("step " + std::to_string(step) + " outside [0, " + std::to_string(total) +
                     "]");
  const double f = static_cast<double>(step) / static_cast<double>(total);
  return lr0 + (lr1 - lr0) * f;
}

double lr_schedule(long long step, long long total) { return lr_linear(2e-4, 2e-5, step, total); }

namespace {

json hyper_to_json(const StageHyper& h) {
  json j;
  j["steps"] = h.steps;
  j["batch"] = h.batch;
  j["lr0"] = h.lr0;
  j["lr1"] = h.lr1;
  return j;
}

StageHyper hyper_from_json(const json& j, const StageHyper& defaults, const char* where) {
  StageHyper h = defaults;
  h.steps = j.value("steps", h.steps);
  h.batch = j.value("batch", h.batch);
  h.lr0 = j.value("lr0", h.lr0);
  h.lr1 = j.value("lr1", h.lr1);
  if (h.steps <= 0 || h.batch <= 0)
    throw ConfigError(std::string(where) + ": steps and batch must be positive");
  if (h.lr0 <= 0.0 || h.lr1 <= 0.0)
    throw ConfigError(std::string(where) + ": learning rates must be positive");
  return h;
}

// Merge the stage hyperparameters into a model config object.
json with_hyper(const std::string& model_json, const StageHyper& h) {
  json j = json::parse(model_json);
  json hj = hyper_to_json(h);
  for (auto it = hj.begin(); it != hj.end(); ++it) j[it.key()] = it.value();
  return j;
}

}  // namespace

std::string ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["ckpt_dir"] = ckpt_dir;

  json d;
  d["dir"] = data.dir;
  d["clips"] = data.clips;
  d["frames"] = data.frames;
  d["size"] = data.size;
  d["n_keypoints"] = data.n_keypoints;
  d["base_seed"] = data.base_seed;
  d["holdout"] = data.holdout;
  j["data"] = d;

  json p = with_hyper(pose.to_json(), pose_train);
  p["disc_lr_scale"] = pose_disc_lr_scale;
  p["sample_temperature"] = sample_temperature;
  j["pose"] = p;

  json s = with_hyper(structure.to_json(), structure_train);
  s["window"] = structure_window;
  j["structure"] = s;

  json g = with_hyper(generator.to_json(), generator_train);
  g["lambda_l1"] = lambda_l1;
  g["lambda_perceptual"] = lambda_perceptual;
  g["lambda_sync"] = lambda_sync;
  g["lambda_distill"] = lambda_distill;
  g["use_sync_disc"] = use_sync_disc;
  j["generator"] = g;

  json f = hyper_to_json(features_train);
  f["base_channels"] = features.base_channels;
  f["n_taps"] = features.n_taps;
  f["init_seed"] = features.init_seed;
  j["features"] = f;

  json y = json::parse(sync.to_json());
  y["steps"] = sync_train.steps;
  y["batch"] = sync_train.batch;
  y["lr"] = sync_train.lr;
  y["hinge_margin"] = sync_train.hinge_margin;
  y["min_shift"] = sync_train.min_shift;
  y["train_seed"] = sync_train.seed;
  j["sync"] = y;

  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  ExperimentConfig cfg;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  try {
    cfg.seed = j.value("seed", cfg.seed);
    cfg.ckpt_dir = j.value("ckpt_dir", cfg.ckpt_dir);

    if (j.contains("data")) {
      const json& d = j["data"];
      cfg.data.dir = d.value("dir", cfg.data.dir);
      cfg.data.clips = d.value("clips", cfg.data.clips);
      cfg.data.frames = d.value("frames", cfg.data.frames);
      cfg.data.size = d.value("size", cfg.data.size);
      cfg.data.n_keypoints = d.value("n_keypoints", cfg.data.n_keypoints);
      cfg.data.base_seed = d.value("base_seed", cfg.data.base_seed);
      cfg.data.holdout = d.value("holdout", cfg.data.holdout);
      if (cfg.data.clips <= 0 || cfg.data.frames <= 0 || cfg.data.size <= 0)
        throw ConfigError("data: clips, frames, and size must be positive");
      if (cfg.data.holdout < 0 || cfg.data.holdout >= cfg.data.clips)
        throw ConfigError("data: holdout must lie in [0, clips)");
    }

    if (j.contains("pose")) {
      const json& p = j["pose"];
      cfg.pose = pose::PoseCvaeConfig::from_json(p.dump());
      cfg.pose_train = hyper_from_json(p, cfg.pose_train, "pose");
      cfg.pose_disc_lr_scale = p.value("disc_lr_scale", cfg.pose_disc_lr_scale);
      cfg.sample_temperature = p.value("sample_temperature", cfg.sample_temperature);
      if (cfg.pose_disc_lr_scale <= 0.0) throw ConfigError("pose: disc_lr_scale must be positive");
      if (cfg.sample_temperature < 0.0)
        throw ConfigError("pose: sample_temperature must be nonnegative");
    }

    if (j.contains("structure")) {
      const json& s = j["structure"];
      cfg.structure = structure::KeypointPredictorConfig::from_json(s.dump());
      cfg.structure_train = hyper_from_json(s, cfg.structure_train, "structure");
      cfg.structure_window = s.value("window", cfg.structure_window);
      if (cfg.structure_window <= 0) throw ConfigError("structure: window must be positive");
    }

    if (j.contains("generator")) {
      const json& g = j["generator"];
      cfg.generator = flowgen::GeneratorConfig::from_json(g.dump());
      cfg.generator_train = hyper_from_json(g, cfg.generator_train, "generator");
      cfg.lambda_l1 = g.value("lambda_l1", cfg.lambda_l1);
      cfg.lambda_perceptual = g.value("lambda_perceptual", cfg.lambda_perceptual);
      cfg.lambda_sync = g.value("lambda_sync", cfg.lambda_sync);
      cfg.lambda_distill = g.value("lambda_distill", cfg.lambda_distill);
      cfg.use_sync_disc = g.value("use_sync_disc", cfg.use_sync_disc);
      if (cfg.lambda_l1 < 0 || cfg.lambda_perceptual < 0 || cfg.lambda_sync < 0 ||
          cfg.lambda_distill < 0)
        throw ConfigError("generator: loss weights must be nonnegative");
    }

    if (j.contains("features")) {
      const json& f = j["features"];
      cfg.features.base_channels = f.value("base_channels", cfg.features.base_channels);
      cfg.features.n_taps = f.value("n_taps", cfg.features.n_taps);
      cfg.features.init_seed = f.value("init_seed", cfg.features.init_seed);
      cfg.features_train = hyper_from_json(f, cfg.features_train, "features");
      if (cfg.features.base_channels <= 0 || cfg.features.n_taps < 1 || cfg.features.n_taps > 3)
        throw ConfigError("features: base_channels positive, n_taps in 1..3");
    }

    if (j.contains("sync")) {
      const json& y = j["sync"];
      cfg.sync = flowgen::SyncEmbedderConfig::from_json(y.dump());
      cfg.sync_train.steps = y.value("steps", cfg.sync_train.steps);
      cfg.sync_train.batch = y.value("batch", cfg.sync_train.batch);
      cfg.sync_train.lr = y.value("lr", cfg.sync_train.lr);
      cfg.sync_train.hinge_margin = y.value("hinge_margin", cfg.sync_train.hinge_margin);
      cfg.sync_train.min_shift = y.value("min_shift", cfg.sync_train.min_shift);
      cfg.sync_train.seed = y.value("train_seed", cfg.sync_train.seed);
      if (cfg.sync_train.steps <= 0 || cfg.sync_train.batch <= 0)
        throw ConfigError("sync: steps and batch must be positive");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  return cfg;
}

std::string apply_env_overrides(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  for (char** env = environ; *env != nullptr; ++env) {
    const std::string entry(*env);
    if (entry.rfind("FONT_", 0) != 0) continue;
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(5, eq - 5);
    const std::string value = entry.substr(eq + 1);
    if (key.empty()) continue;

    // FONT_POSE__D_Z -> ["pose"]["d_z"], lowercased segments.
    std::vector<std::string> path;
    std::size_t start = 0;
    while (true) {
      const std::size_t sep = key.find("__", start);
      path.push_back(key.substr(start, sep == std::string::npos ? sep : sep - start));
      if (sep == std::string::npos) break;
      start = sep + 2;
    }
    bool ok = true;
    for (auto& seg : path) {
      if (seg.empty()) {
        ok = false;
        break;
      }
      for (char& c : seg) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (!ok) continue;

    json parsed;
    try {
      parsed = json::parse(value);
      if (!(parsed.is_number() || parsed.is_boolean() || parsed.is_string() || parsed.is_null()))
        parsed = value;  // only scalar overrides; arrays/objects stay strings
    } catch (const json::exception&) {
      parsed = value;
    }

    try {
      json* cursor = &j;
      for (std::size_t i = 0; i + 1 < path.size(); ++i) cursor = &((*cursor)[path[i]]);
      (*cursor)[path.back()] = parsed;
    } catch (const json::exception&) {
      // A path that collides with an existing scalar is left untouched.
    }
  }
  return j.dump();
}

ExperimentConfig ExperimentConfig::load(const std::string& path, bool apply_env) {
  std::string text = "{}";
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    text = buf.str();
  }
  if (apply_env) text = apply_env_overrides(text);
  return from_json(text);
}

std::uint64_t ExperimentConfig::hash() const { return core::fnv64(to_json()); }

}  // namespace font::harness
