#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>

namespace mdtp {

/// Incremental SHA-256 backed by OpenSSL.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(Sha256&&) noexcept;
  Sha256& operator=(Sha256&&) noexcept;

  void update(std::span<const char> data);
  /// Lower-case hex digest. The hasher cannot be updated afterwards.
  std::string finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::span<const char> data);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace mdtp
