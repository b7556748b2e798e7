#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

namespace nlidisc {

/// Incremental SHA-256. Fields fed through update_field() are length-prefixed
/// so ("ab","c") and ("a","bc") hash differently.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::string_view bytes);
  Sha256& update_field(std::string_view bytes);
  /// Finalizes; the object must not be updated afterwards.
  std::string hex_digest();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view bytes);

/// 64-bit FNV-1a, used only to derive RNG streams from strings.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace nlidisc
