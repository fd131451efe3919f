#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "font/media/types.hpp"

namespace font::media {

// Dataset shards: one archive per clip (frames as u8, poses/keypoints/
// Jacobians/features as f64, companion audio as f32) plus a JSON sidecar
// with fps, size, seed, and the generating spec's hash.

std::string spec_to_json(const SynthSpec& spec);
SynthSpec spec_from_json(const std::string& json_text);
std::uint64_t spec_hash(const SynthSpec& spec);

std::string shard_path(const std::string& dir, int index);
void write_clip_shard(const std::string& dir, int index, const SyntheticClip& clip,
                      const SynthSpec& spec);
SyntheticClip load_clip_shard(const std::string& path);

// Sorted shard file list for a dataset directory.
std::vector<std::string> list_shards(const std::string& dir);

// Renders n_clips clips with seeds base_seed, base_seed+1, ... into dir.
void write_dataset(const std::string& dir, const SynthSpec& spec, int n_clips, int base_seed);

}  // namespace font::media
