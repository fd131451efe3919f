#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace font::core {

// FNV-1a 64-bit. Used for checkpoint integrity, config hashes and the
// determinism checks on rendered output.
class Fnv64 {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ull;
    }
  }
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ull;
};

inline std::uint64_t fnv64(const void* data, std::size_t n) {
  Fnv64 h;
  h.update(data, n);
  return h.digest();
}

inline std::uint64_t fnv64(const std::string& s) { return fnv64(s.data(), s.size()); }

std::string hex64(std::uint64_t v);

}  // namespace font::core
