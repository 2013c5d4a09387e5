#include "fedgan/secret_sharing.hpp"

#include <algorithm>
#include <set>

namespace fedgan {

void ShareConfig::validate() const {
    if (threshold < 2) throw SecretSharingError("threshold must be >= 2");
    if (threshold > n_shares)
        throw SecretSharingError("threshold exceeds share count");
    if (field_prime < BigUint(2))
        throw SecretSharingError("field prime must be >= 2");
}

std::vector<SecretShare> split(const BigUint& secret, const ShareConfig& cfg,
                               Prng& rng) {
    cfg.validate();
    if (secret >= cfg.field_prime)
        throw SecretSharingError("secret not below field prime");

    // coefficients[0] = secret, higher coefficients uniform in GF(p)
    std::vector<BigUint> coefficients;
    coefficients.push_back(secret);
    for (std::uint32_t i = 1; i < cfg.threshold; ++i)
        coefficients.push_back(rng.below(cfg.field_prime));

    // Digest binding all shares of this split: config fields plus a nonce so
    // two splits of the same secret are distinguishable.
    Bytes nonce(16);
    rng.fill(nonce);
    Bytes material;
    append_u32_be(material, cfg.n_shares);
    append_u32_be(material, cfg.threshold);
    append_field(material, cfg.field_prime.to_bytes_be());
    append_field(material, nonce);
    Digest digest = sha256(material);

    std::vector<SecretShare> shares;
    shares.reserve(cfg.n_shares);
    for (std::uint32_t x = 1; x <= cfg.n_shares; ++x) {
        // Horner evaluation mod p
        BigUint y;
        for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it)
            y = (y * BigUint(x) + *it) % cfg.field_prime;
        shares.push_back(SecretShare{x, y, digest});
    }
    return shares;
}

BigUint lagrange_coefficient_at_zero(std::uint32_t xi,
                                     std::span<const std::uint32_t> indices,
                                     const BigUint& p) {
    // prod_{j != i} (0 - x_j) / (x_i - x_j) mod p
    BigUint numerator(1);
    BigUint denominator(1);
    for (std::uint32_t xj : indices) {
        if (xj == xi) continue;
        numerator = (numerator * (p - BigUint(xj) % p)) % p;
        BigUint diff = xi > xj ? BigUint(xi - xj) : p - BigUint(xj - xi) % p;
        denominator = (denominator * diff) % p;
    }
    return (numerator * modinv(denominator, p)) % p;
}

BigUint reconstruct(std::span<const SecretShare> shares,
                    const ShareConfig& cfg) {
    cfg.validate();
    if (shares.size() < cfg.threshold)
        throw SecretSharingError("insufficient shares: have " +
                                 std::to_string(shares.size()) + ", need " +
                                 std::to_string(cfg.threshold));
    std::set<std::uint32_t> seen;
    for (const auto& s : shares) {
        if (s.index < 1 || s.index > cfg.n_shares)
            throw SecretSharingError("share index out of range");
        if (!seen.insert(s.index).second)
            throw SecretSharingError("duplicate share index " +
                                     std::to_string(s.index));
        if (s.split_digest != shares.front().split_digest)
            throw SecretSharingError("shares from mixed splits");
    }

    std::vector<std::uint32_t> indices;
    for (const auto& s : shares) indices.push_back(s.index);

    const BigUint& p = cfg.field_prime;
    BigUint secret;
    for (const auto& s : shares) {
        BigUint li = lagrange_coefficient_at_zero(s.index, indices, p);
        secret = (secret + s.value * li) % p;
    }
    return secret;
}

Bytes serialize_share(const SecretShare& share) {
    Bytes out;
    append_u32_be(out, share.index);
    append_field(out, share.value.to_bytes_be());
    append_bytes(out, share.split_digest);
    return out;
}

SecretShare parse_share(std::span<const std::uint8_t> data) {
    auto take_u32 = [&](std::size_t off) {
        return (static_cast<std::uint32_t>(data[off]) << 24) |
               (static_cast<std::uint32_t>(data[off + 1]) << 16) |
               (static_cast<std::uint32_t>(data[off + 2]) << 8) |
               static_cast<std::uint32_t>(data[off + 3]);
    };
    if (data.size() < 8) throw SecretSharingError("share file truncated");
    SecretShare share;
    share.index = take_u32(0);
    std::uint32_t vlen = take_u32(4);
    if (data.size() != 8 + vlen + 32)
        throw SecretSharingError("share file size mismatch");
    share.value = BigUint::from_bytes_be(data.subspan(8, vlen));
    std::copy_n(data.begin() + 8 + vlen, 32, share.split_digest.begin());
    return share;
}

}  // namespace fedgan
