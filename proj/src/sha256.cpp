#include "lrc/sha256.hpp"

#include <openssl/evp.h>

#include "lrc/error.hpp"

namespace lrc {

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data) {
  std::array<std::uint8_t, 32> out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size())
    fail(ErrorCode::kIo, "SHA-256 computation failed");
  return out;
}

}  // namespace lrc
