#include "fedgan/phe.hpp"

#include <cmath>
#include <set>

namespace fedgan {

PhePublicKey PhePublicKey::from_modulus(const BigUint& n) {
    PhePublicKey pk;
    pk.n = n;
    pk.n_squared = n * n;
    pk.digest = sha256(std::span<const std::uint8_t>(n.to_bytes_be()));
    return pk;
}

Digest Ciphertext::digest() const {
    Bytes material;
    append_field(material, value.to_bytes_be());
    append_bytes(material, key_digest);
    return sha256(material);
}

Bytes Ciphertext::serialize() const {
    Bytes out;
    append_bytes(out, key_digest);
    append_field(out, value.to_bytes_be());
    return out;
}

Ciphertext Ciphertext::parse(std::span<const std::uint8_t> data) {
    if (data.size() < 36) throw PheError("ciphertext bytes truncated");
    Ciphertext c;
    std::copy_n(data.begin(), 32, c.key_digest.begin());
    std::uint32_t len = (static_cast<std::uint32_t>(data[32]) << 24) |
                        (static_cast<std::uint32_t>(data[33]) << 16) |
                        (static_cast<std::uint32_t>(data[34]) << 8) |
                        static_cast<std::uint32_t>(data[35]);
    if (data.size() != 36 + len) throw PheError("ciphertext size mismatch");
    c.value = BigUint::from_bytes_be(data.subspan(36, len));
    return c;
}

namespace {

// L(u) = (u - 1) / n; u must be 1 mod n.
BigUint paillier_l(const BigUint& u, const BigUint& n) {
    BigUint um1 = u - BigUint(1);
    if (!(um1 % n).is_zero()) throw PheError("L-function input not 1 mod n");
    return um1 / n;
}

PheKeyPair finish_keypair(const BigUint& p, const BigUint& q) {
    BigUint n = p * q;
    PheKeyPair kp;
    kp.pk = PhePublicKey::from_modulus(n);
    BigUint p1 = p - BigUint(1);
    BigUint q1 = q - BigUint(1);
    if (!(gcd(n, p1 * q1) == BigUint(1)))
        throw PheError("gcd(n, phi(n)) != 1");
    kp.sk.lambda = lcm(p1, q1);
    // g = n+1: L(g^lambda mod n^2) = lambda mod n
    BigUint g_lambda = modpow(n + BigUint(1), kp.sk.lambda, kp.pk.n_squared);
    kp.sk.mu = modinv(paillier_l(g_lambda, n), n);
    // CRT: d = lambda * (lambda^-1 mod n), so d = 0 mod lambda and 1 mod n
    kp.threshold_exponent = kp.sk.lambda * modinv(kp.sk.lambda % n, n);
    kp.share_field_prime = next_prime(kp.pk.n_squared);
    return kp;
}

}  // namespace

PheKeyPair keygen(unsigned prime_bits, Prng& rng) {
    if (prime_bits < 16) throw PheError("keygen: prime_bits must be >= 16");
    while (true) {
        BigUint p = gen_prime(prime_bits, rng);
        BigUint q = gen_prime(prime_bits, rng);
        if (p == q) continue;
        BigUint n = p * q;
        if (!(gcd(n, (p - BigUint(1)) * (q - BigUint(1))) == BigUint(1)))
            continue;
        return finish_keypair(p, q);
    }
}

PheKeyPair keypair_from_primes(const BigUint& p, const BigUint& q) {
    return finish_keypair(p, q);
}

Ciphertext encrypt_with_r(const PhePublicKey& pk, const BigUint& m,
                          const BigUint& r) {
    if (m >= pk.n) throw PheError("plaintext not below modulus");
    // g = n+1: g^m = 1 + m*n mod n^2
    BigUint gm = (BigUint(1) + m * pk.n) % pk.n_squared;
    BigUint rn = modpow(r, pk.n, pk.n_squared);
    return Ciphertext{(gm * rn) % pk.n_squared, pk.digest};
}

Ciphertext encrypt(const PhePublicKey& pk, const BigUint& m, Prng& rng) {
    while (true) {
        BigUint r = rng.below(pk.n - BigUint(1)) + BigUint(1);
        if (gcd(r, pk.n) == BigUint(1)) return encrypt_with_r(pk, m, r);
    }
}

BigUint decrypt(const PhePublicKey& pk, const PhePrivateKey& sk,
                const Ciphertext& c) {
    if (c.key_digest != pk.digest) throw PheError("ciphertext under wrong key");
    BigUint u = modpow(c.value, sk.lambda, pk.n_squared);
    return (paillier_l(u, pk.n) * sk.mu) % pk.n;
}

BigUint decrypt_with_exponent(const PhePublicKey& pk, const BigUint& d,
                              const Ciphertext& c) {
    if (c.key_digest != pk.digest) throw PheError("ciphertext under wrong key");
    BigUint u = modpow(c.value, d, pk.n_squared);
    if (!((u - BigUint(1)) % pk.n).is_zero())
        throw PheError("wrong threshold exponent for this key");
    return paillier_l(u, pk.n) % pk.n;
}

Ciphertext add(const PhePublicKey& pk, const Ciphertext& a,
               const Ciphertext& b) {
    if (a.key_digest != b.key_digest || a.key_digest != pk.digest)
        throw PheError("ciphertext key mismatch");
    return Ciphertext{(a.value * b.value) % pk.n_squared, pk.digest};
}

// ---------------------------------------------------------------------------

void FixedPointCodec::check_headroom(std::uint32_t parties,
                                     const BigUint& n) const {
    double limit = static_cast<double>(parties) * bound * scale();
    BigUint limit_int(static_cast<std::uint64_t>(std::ceil(limit)));
    if (!(limit_int * BigUint(2) < n))
        throw PheError("codec headroom violated: parties*bound*scale >= n/2");
}

BigUint encode_scalar(double v, const FixedPointCodec& codec,
                      const BigUint& n) {
    if (!std::isfinite(v) || std::fabs(v) > codec.bound)
        throw PheError("value outside codec bound");
    double scaled = std::round(v * codec.scale());
    auto magnitude =
        BigUint(static_cast<std::uint64_t>(std::llround(std::fabs(scaled))));
    if (scaled < 0.0 && !magnitude.is_zero()) return n - magnitude;
    return magnitude % n;
}

double decode_scalar(const BigUint& m, const FixedPointCodec& codec,
                     const BigUint& n) {
    BigUint half = n / BigUint(2);
    if (m > half) {
        // centered lift: negative value
        return -(n - m).to_double() / codec.scale();
    }
    return m.to_double() / codec.scale();
}

std::vector<BigUint> encode_vector(std::span<const double> v,
                                   const FixedPointCodec& codec,
                                   const BigUint& n) {
    std::vector<BigUint> out;
    out.reserve(v.size());
    for (double x : v) out.push_back(encode_scalar(x, codec, n));
    return out;
}

std::vector<double> decode_vector(std::span<const BigUint> m,
                                  const FixedPointCodec& codec,
                                  const BigUint& n) {
    std::vector<double> out;
    out.reserve(m.size());
    for (const BigUint& x : m) out.push_back(decode_scalar(x, codec, n));
    return out;
}

// ---------------------------------------------------------------------------

PartialDecryption partial_decrypt(const PhePublicKey& pk,
                                  const SecretShare& share,
                                  std::span<const std::uint32_t> participants,
                                  const BigUint& share_field_prime,
                                  const Ciphertext& c) {
    if (c.key_digest != pk.digest) throw PheError("ciphertext under wrong key");
    BigUint wi = lagrange_coefficient_at_zero(share.index, participants,
                                              share_field_prime);
    BigUint exponent = (wi * share.value) % share_field_prime;
    return PartialDecryption{share.index, modpow(c.value, exponent, pk.n_squared),
                             c.digest()};
}

BigUint combine_partials(const PhePublicKey& pk,
                         std::span<const PartialDecryption> parts,
                         const Ciphertext& c, const ShareConfig& cfg) {
    if (parts.size() < cfg.threshold)
        throw PheError("insufficient partial decryptions: have " +
                       std::to_string(parts.size()) + ", need " +
                       std::to_string(cfg.threshold));
    Digest expected = c.digest();
    std::set<std::uint32_t> seen;
    BigUint combined(1);
    for (const auto& part : parts) {
        if (part.ciphertext_digest != expected)
            throw PheError("partial decryption for a different ciphertext");
        if (!seen.insert(part.share_index).second)
            throw PheError("duplicate partial decryption index");
        combined = (combined * part.component) % pk.n_squared;
    }
    // combined = c^(d + K*p_field), 0 <= K < #parts. Strip the K*p_field
    // factor: only c^d is congruent to 1 mod n.
    BigUint step_inv =
        modinv(modpow(c.value, cfg.field_prime, pk.n_squared), pk.n_squared);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        if (((combined - BigUint(1)) % pk.n).is_zero())
            return paillier_l(combined, pk.n) % pk.n;
        combined = (combined * step_inv) % pk.n_squared;
    }
    throw PheError("partial decryptions do not combine under this key");
}

}  // namespace fedgan
