#pragma once

// Checkpoint files are model archives with two extra entries:
//   meta/step         F64 {1}  training steps completed
//   meta/config_hash  U8  {8}  experiment-config fingerprint, little-endian
// Models ignore entries they do not recognize, so a checkpoint loads
// anywhere its underlying archive does. The fingerprint lets a resuming run
// refuse to continue under a different configuration.

#include <cstdint>
#include <string>

#include "font/core/archive.hpp"

namespace font::harness {

struct Checkpoint {
  core::Archive archive;
  std::uint64_t config_hash = 0;
  long long step = 0;
};

// Stamps the meta entries onto `archive` and writes it atomically.
void save_checkpoint(core::Archive archive, const std::string& path, std::uint64_t config_hash,
                     long long step);

// Loads and validates; a file without both meta entries is an IntegrityError.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace font::harness
