#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedgan/bytes.hpp"
#include "fedgan/modmath.hpp"

namespace fedgan {

struct SecretSharingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShareConfig {
    std::uint32_t n_shares = 0;
    std::uint32_t threshold = 0;
    BigUint field_prime;

    void validate() const;
};

struct SecretShare {
    std::uint32_t index = 0;  // 1-based consortium ordinal
    BigUint value;
    Digest split_digest{};  // binds shares to one split
};

/// Shamir split over GF(field_prime): evaluations at x = 1..n of a random
/// degree-(threshold-1) polynomial with constant term `secret`.
std::vector<SecretShare> split(const BigUint& secret, const ShareConfig& cfg,
                               Prng& rng);

/// Lagrange interpolation at x = 0. Needs >= threshold shares with distinct
/// indices and a common split digest.
BigUint reconstruct(std::span<const SecretShare> shares, const ShareConfig& cfg);

// Share file layout: index (u32 BE), value (u32 BE length + big-endian
// bytes), split digest (32 bytes). Used by the audit CLI.
Bytes serialize_share(const SecretShare& share);
SecretShare parse_share(std::span<const std::uint8_t> data);

/// Lagrange coefficient at x = 0 for index `xi` within `indices`, mod p.
BigUint lagrange_coefficient_at_zero(std::uint32_t xi,
                                     std::span<const std::uint32_t> indices,
                                     const BigUint& p);

}  // namespace fedgan
