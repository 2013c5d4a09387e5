#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedgan {

using Bytes = std::vector<std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> data);
Digest sha256(std::string_view data);

std::string to_hex(std::span<const std::uint8_t> data);
std::string to_hex(const Digest& d);
Bytes from_hex(std::string_view hex);

void append_u32_be(Bytes& out, std::uint32_t v);
void append_u64_be(Bytes& out, std::uint64_t v);
void append_bytes(Bytes& out, std::span<const std::uint8_t> data);
// length-prefixed field (u32 big-endian length, then payload)
void append_field(Bytes& out, std::span<const std::uint8_t> data);
void append_field(Bytes& out, std::string_view data);

}  // namespace fedgan
