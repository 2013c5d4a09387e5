#include "fedgan/bytes.hpp"

#include <openssl/sha.h>

#include <stdexcept>

namespace fedgan {

Digest sha256(std::span<const std::uint8_t> data) {
    Digest out{};
    SHA256(data.data(), data.size(), out.data());
    return out;
}

Digest sha256(std::string_view data) {
    return sha256(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

std::string to_hex(std::span<const std::uint8_t> data) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (std::uint8_t b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

std::string to_hex(const Digest& d) {
    return to_hex(std::span<const std::uint8_t>(d.data(), d.size()));
}

static int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw std::invalid_argument("invalid hex character");
}

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) throw std::invalid_argument("odd-length hex string");
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<std::uint8_t>((hex_nibble(hex[2 * i]) << 4) |
                                           hex_nibble(hex[2 * i + 1]));
    }
    return out;
}

void append_u32_be(Bytes& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8)
        out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void append_u64_be(Bytes& out, std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8)
        out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void append_bytes(Bytes& out, std::span<const std::uint8_t> data) {
    out.insert(out.end(), data.begin(), data.end());
}

void append_field(Bytes& out, std::span<const std::uint8_t> data) {
    append_u32_be(out, static_cast<std::uint32_t>(data.size()));
    append_bytes(out, data);
}

void append_field(Bytes& out, std::string_view data) {
    append_field(out, std::span<const std::uint8_t>(
                          reinterpret_cast<const std::uint8_t*>(data.data()),
                          data.size()));
}

}  // namespace fedgan
