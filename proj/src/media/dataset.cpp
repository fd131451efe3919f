#include "font/media/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "font/core/archive.hpp"
#include "font/core/errors.hpp"
#include "font/core/hash.hpp"
#include "font/media/synth.hpp"

namespace font::media {

namespace fs = std::filesystem;
using core::Archive;
using core::ArchiveEntry;
using nlohmann::json;

std::string spec_to_json(const SynthSpec& spec) {
  json j;
  j["frames"] = spec.frames;
  j["size"] = spec.size;
  j["n_keypoints"] = spec.n_keypoints;
  j["fps"] = spec.fps;
  j["yaw_amp"] = spec.yaw_amp;
  j["pitch_amp"] = spec.pitch_amp;
  j["roll_amp"] = spec.roll_amp;
  j["scale_amp"] = spec.scale_amp;
  j["trans_amp"] = spec.trans_amp;
  json poses = json::array();
  for (const PoseVector& p : spec.pose_program)
    poses.push_back({p.yaw, p.pitch, p.roll, p.scale, p.tx, p.ty});
  j["pose_program"] = poses;
  j["mouth_program"] = spec.mouth_program;
  return j.dump();
}

SynthSpec spec_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad synth spec json: ") + e.what());
  }
  SynthSpec s;
  try {
    s.frames = j.value("frames", s.frames);
    s.size = j.value("size", s.size);
    s.n_keypoints = j.value("n_keypoints", s.n_keypoints);
    s.fps = j.value("fps", s.fps);
    s.yaw_amp = j.value("yaw_amp", s.yaw_amp);
    s.pitch_amp = j.value("pitch_amp", s.pitch_amp);
    s.roll_amp = j.value("roll_amp", s.roll_amp);
    s.scale_amp = j.value("scale_amp", s.scale_amp);
    s.trans_amp = j.value("trans_amp", s.trans_amp);
    if (j.contains("pose_program"))
      for (const auto& row : j["pose_program"]) {
        PoseVector p;
        p.yaw = row.at(0);
        p.pitch = row.at(1);
        p.roll = row.at(2);
        p.scale = row.at(3);
        p.tx = row.at(4);
        p.ty = row.at(5);
        s.pose_program.push_back(p);
      }
    if (j.contains("mouth_program"))
      s.mouth_program = j["mouth_program"].get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad synth spec field: ") + e.what());
  }
  return s;
}

std::uint64_t spec_hash(const SynthSpec& spec) {
  const std::string s = spec_to_json(spec);
  return core::fnv64(s.data(), s.size());
}

std::string shard_path(const std::string& dir, int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "clip_%05d.bin", index);
  return (fs::path(dir) / name).string();
}

void write_clip_shard(const std::string& dir, int index, const SyntheticClip& clip,
                      const SynthSpec& spec) {
  if (clip.count() == 0) throw EmptyInputError("cannot shard an empty clip");
  fs::create_directories(dir);
  const int t = clip.count();
  const int h = clip.frames.height(), w = clip.frames.width();
  const int nkp = clip.gt_keypoints[0].dim(0);

  Archive a;
  a.stage = "dataset";

  std::vector<std::uint8_t> frames_u8;
  frames_u8.reserve(static_cast<std::size_t>(t) * h * w * 3);
  for (const Tensor& f : clip.frames.frames)
    for (double v : f.raw())
      frames_u8.push_back(
          static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  a.put("frames", ArchiveEntry::from_u8({t, h, w, 3}, frames_u8));

  Tensor poses({t, 6});
  for (int k = 0; k < t; ++k) {
    const Tensor p = clip.poses[static_cast<std::size_t>(k)].to_tensor();
    for (int c = 0; c < 6; ++c) poses.at(k, c) = p[static_cast<std::size_t>(c)];
  }
  a.put("poses", poses);

  Tensor mfcc({t, 28, 12});
  for (int k = 0; k < t; ++k) {
    const Tensor& c = clip.audio_features[static_cast<std::size_t>(k)].coeffs;
    for (int r = 0; r < 28; ++r)
      for (int j = 0; j < 12; ++j) mfcc.at(k, r, j) = c.at(r, j);
  }
  a.put("mfcc", mfcc);

  Tensor kp({t, nkp, 2});
  Tensor jac({t, nkp, 2, 2});
  for (int k = 0; k < t; ++k) {
    const Tensor& kk = clip.gt_keypoints[static_cast<std::size_t>(k)];
    const Tensor& jj = clip.gt_jacobians[static_cast<std::size_t>(k)];
    for (int n = 0; n < nkp; ++n) {
      kp.at(k, n, 0) = kk.at(n, 0);
      kp.at(k, n, 1) = kk.at(n, 1);
      for (int r = 0; r < 2; ++r)
        for (int cidx = 0; cidx < 2; ++cidx) jac.at(k, n, r, cidx) = jj.at(n, r, cidx);
    }
  }
  a.put("gt_kp", kp);
  a.put("gt_jac", jac);

  if (!clip.mouth.empty()) {
    Tensor mouth({t});
    for (int k = 0; k < t; ++k) mouth[static_cast<std::size_t>(k)] = clip.mouth[k];
    a.put("mouth", mouth);
  }

  std::vector<float> audio(clip.audio_samples.size());
  for (std::size_t i = 0; i < audio.size(); ++i)
    audio[i] = static_cast<float>(clip.audio_samples[i]);
  a.put("audio", ArchiveEntry::from_f32({static_cast<int>(audio.size())}, audio));

  json side;
  side["fps"] = clip.frames.fps;
  side["size"] = w;
  side["frames"] = t;
  side["n_keypoints"] = nkp;
  side["seed"] = clip.seed;
  side["spec_hash"] = core::hex64(spec_hash(spec));
  a.config_json = side.dump();

  const std::string path = shard_path(dir, index);
  a.save(path);
  std::ofstream sc(fs::path(path).replace_extension(".json"));
  sc << a.config_json << "\n";
}

SyntheticClip load_clip_shard(const std::string& path) {
  const Archive a = Archive::load(path);
  if (a.stage != "dataset")
    throw StageMismatchError("'" + path + "' is a " + a.stage + " archive, not a dataset shard");
  json side;
  try {
    side = json::parse(a.config_json);
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("bad shard sidecar json: ") + e.what());
  }

  SyntheticClip clip;
  clip.seed = side.value("seed", 0);
  clip.frames.fps = side.value("fps", 25.0);

  const ArchiveEntry& fr = a.at("frames");
  if (fr.shape.size() != 4 || fr.shape[3] != 3) throw IntegrityError("bad frames entry shape");
  const int t = fr.shape[0], h = fr.shape[1], w = fr.shape[2];
  const std::vector<std::uint8_t>& bytes = fr.to_u8();
  const std::size_t frame_numel = static_cast<std::size_t>(h) * w * 3;
  for (int k = 0; k < t; ++k) {
    Tensor f({h, w, 3});
    for (std::size_t i = 0; i < frame_numel; ++i)
      f[i] = bytes[static_cast<std::size_t>(k) * frame_numel + i] / 255.0;
    clip.frames.frames.push_back(std::move(f));
  }

  const Tensor poses = a.tensor("poses");
  const Tensor mfcc = a.tensor("mfcc");
  const Tensor kp = a.tensor("gt_kp");
  const Tensor jac = a.tensor("gt_jac");
  if (poses.dim(0) != t || mfcc.dim(0) != t || kp.dim(0) != t || jac.dim(0) != t)
    throw IntegrityError("shard per-frame arrays disagree on length");
  const int nkp = kp.dim(1);
  for (int k = 0; k < t; ++k) {
    Tensor p({6});
    for (int c = 0; c < 6; ++c) p[static_cast<std::size_t>(c)] = poses.at(k, c);
    clip.poses.push_back(PoseVector::from_tensor(p));

    AudioFeature feat;
    feat.frame_index = k;
    feat.coeffs = Tensor({28, 12});
    for (int r = 0; r < 28; ++r)
      for (int j = 0; j < 12; ++j) feat.coeffs.at(r, j) = mfcc.at(k, r, j);
    clip.audio_features.push_back(std::move(feat));

    Tensor kk({nkp, 2});
    Tensor jj({nkp, 2, 2});
    for (int n = 0; n < nkp; ++n) {
      kk.at(n, 0) = kp.at(k, n, 0);
      kk.at(n, 1) = kp.at(k, n, 1);
      for (int r = 0; r < 2; ++r)
        for (int cidx = 0; cidx < 2; ++cidx) jj.at(n, r, cidx) = jac.at(k, n, r, cidx);
    }
    clip.gt_keypoints.push_back(std::move(kk));
    clip.gt_jacobians.push_back(std::move(jj));
  }

  if (a.has("mouth")) {
    const Tensor m = a.tensor("mouth");
    clip.mouth.assign(m.raw().begin(), m.raw().end());
  }
  if (a.has("audio")) {
    const std::vector<float> audio = a.at("audio").to_f32();
    clip.audio_samples.assign(audio.begin(), audio.end());
  }
  return clip;
}

std::vector<std::string> list_shards(const std::string& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) throw DecodeError("'" + dir + "' is not a directory");
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("clip_", 0) == 0 && entry.path().extension() == ".bin")
      out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_dataset(const std::string& dir, const SynthSpec& spec, int n_clips, int base_seed) {
  if (n_clips <= 0) throw EmptyInputError("dataset needs at least one clip");
  for (int i = 0; i < n_clips; ++i) {
    const SyntheticClip clip = synth_generate(spec, base_seed + i);
    write_clip_shard(dir, i, clip, spec);
  }
}

}  // namespace font::media
