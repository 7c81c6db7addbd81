#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace thinkstop {

std::array<std::uint8_t, 32> sha256(std::string_view data);

/// Lower-case hex SHA-256 of `data`, truncated to `hex_chars` characters (max 64).
std::string sha256_hex(std::string_view data, std::size_t hex_chars = 64);

/// First eight bytes of SHA-256 as a big-endian integer; used to seed PRNGs.
std::uint64_t sha256_u64(std::string_view data);

}  // namespace thinkstop
