#include "font/harness/checkpoint.hpp"

#include "font/core/errors.hpp"

namespace font::harness {

namespace {

core::ArchiveEntry hash_entry(std::uint64_t h) {
  std::vector<std::uint8_t> bytes(8);
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<std::uint8_t>((h >> (8 * i)) & 0xff);
  return core::ArchiveEntry::from_u8({8}, bytes);
}

std::uint64_t hash_from_entry(const core::ArchiveEntry& e) {
  const auto bytes = e.to_u8();
  if (bytes.size() != 8) throw IntegrityError("checkpoint config hash must be 8 bytes");
  std::uint64_t h = 0;
  for (int i = 0; i < 8; ++i) h |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return h;
}

}  // namespace

void save_checkpoint(core::Archive archive, const std::string& path, std::uint64_t config_hash,
                     long long step) {
  core::Tensor step_t({1});
  step_t.data()[0] = static_cast<double>(step);
  archive.put("meta/step", step_t);
  archive.put("meta/config_hash", hash_entry(config_hash));
  archive.save(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  Checkpoint ckpt;
  ckpt.archive = core::Archive::load(path);
  if (!ckpt.archive.has("meta/step") || !ckpt.archive.has("meta/config_hash"))
    throw IntegrityError("'" + path + "' is not a checkpoint: missing meta entries");
  ckpt.step = static_cast<long long>(ckpt.archive.tensor("meta/step").data()[0]);
  ckpt.config_hash = hash_from_entry(ckpt.archive.at("meta/config_hash"));
  return ckpt;
}

}  // namespace font::harness
