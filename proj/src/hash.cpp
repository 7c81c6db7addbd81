#include "thinkstop/hash.hpp"

#include <openssl/evp.h>

#include <memory>
#include <stdexcept>

namespace thinkstop {

std::array<std::uint8_t, 32> sha256(std::string_view data) {
  std::array<std::uint8_t, 32> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != digest.size()) {
    throw std::runtime_error("EVP_Digest(sha256) failed");
  }
  return digest;
}

std::string sha256_hex(std::string_view data, std::size_t hex_chars) {
  static constexpr char kHex[] = "0123456789abcdef";
  const auto digest = sha256(data);
  std::string out;
  out.reserve(64);
  for (auto byte : digest) {
    out.push_back(kHex[byte >> 4]);
    out.push_back(kHex[byte & 0x0f]);
  }
  if (hex_chars < out.size()) out.resize(hex_chars);
  return out;
}

std::uint64_t sha256_u64(std::string_view data) {
  const auto digest = sha256(data);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | digest[i];
  return v;
}

}  // namespace thinkstop
