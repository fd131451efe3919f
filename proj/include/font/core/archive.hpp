#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "font/core/tensor.hpp"

namespace font::core {

// Element type of a stored array. Model weights are F64; dataset shards also
// carry U8 frame bytes and F32 audio features to keep shard files small.
enum class Dtype : std::uint8_t { F64 = 0, F32 = 1, U8 = 2 };

// One named array inside an archive: dtype tag, shape, raw payload bytes.
struct ArchiveEntry {
  Dtype dtype = Dtype::F64;
  Shape shape;
  std::vector<std::uint8_t> bytes;

  static ArchiveEntry from_tensor(const Tensor& t);
  static ArchiveEntry from_f32(Shape shape, const std::vector<float>& v);
  static ArchiveEntry from_u8(Shape shape, const std::vector<std::uint8_t>& v);

  std::size_t numel() const;
  Tensor to_tensor() const;  // converts F32/U8 payloads up to double
  std::vector<float> to_f32() const;
  std::vector<std::uint8_t> to_u8() const;
};

// Named-array container with a stage tag and a JSON config blob. The on-disk
// form is a single little-endian binary file ending in an FNV-1a hash of the
// body, so corruption and truncation are detected on load. Writes go to a
// temp file in the same directory and are renamed into place.
//
// Entries are kept in a sorted map so the serialized bytes are a pure
// function of the content: saving the same archive twice yields identical
// files, and load(save(x)) round-trips every payload bitwise.
class Archive {
 public:
  std::string stage;        // which pipeline stage produced this file
  std::string config_json;  // free-form JSON (hyperparameters, hashes, counts)
  std::map<std::string, ArchiveEntry> entries;

  void put(const std::string& name, const Tensor& t);
  void put(const std::string& name, ArchiveEntry e);
  bool has(const std::string& name) const;
  const ArchiveEntry& at(const std::string& name) const;  // throws IntegrityError if absent
  Tensor tensor(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;  // body + trailing hash
  static Archive deserialize(const std::vector<std::uint8_t>& buf);

  void save(const std::string& path) const;
  static Archive load(const std::string& path);

  // Hash of the serialized body (everything except the trailing hash field).
  std::uint64_t content_hash() const;
};

}  // namespace font::core
