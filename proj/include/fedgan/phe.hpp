#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedgan/bytes.hpp"
#include "fedgan/modmath.hpp"
#include "fedgan/secret_sharing.hpp"

namespace fedgan {

struct PheError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Paillier public key with g = n + 1 fixed.
struct PhePublicKey {
    BigUint n;
    BigUint n_squared;
    Digest digest{};  // SHA-256 of n's big-endian bytes

    static PhePublicKey from_modulus(const BigUint& n);
};

struct PhePrivateKey {
    BigUint lambda;  // lcm(p-1, q-1)
    BigUint mu;      // L(g^lambda mod n^2)^-1 mod n
};

struct PheKeyPair {
    PhePublicKey pk;
    PhePrivateKey sk;
    // Threshold-decryption exponent: d == 0 (mod lambda), d == 1 (mod n).
    // c^d mod n^2 = (1+n)^m, so L(c^d) recovers m without mu. This is the
    // quantity that gets Shamir-shared and later reconstructed for audit.
    BigUint threshold_exponent;
    // Smallest prime exceeding n^2, a key-independent bound on d (d < n*lambda
    // < n^2). Shamir shares of d live in GF(share_field_prime).
    BigUint share_field_prime;
};

struct Ciphertext {
    BigUint value;  // in [1, n^2)
    Digest key_digest{};

    Digest digest() const;  // SHA-256 over value bytes and key digest
    Bytes serialize() const;
    static Ciphertext parse(std::span<const std::uint8_t> data);
};

using CipherVector = std::vector<Ciphertext>;

PheKeyPair keygen(unsigned prime_bits, Prng& rng);

/// Build keys from tiny fixed primes; unit tests and hand-derived vectors.
PheKeyPair keypair_from_primes(const BigUint& p, const BigUint& q);

Ciphertext encrypt(const PhePublicKey& pk, const BigUint& m, Prng& rng);
/// Encryption with caller-chosen randomness r (hand-derived test vectors).
Ciphertext encrypt_with_r(const PhePublicKey& pk, const BigUint& m,
                          const BigUint& r);

BigUint decrypt(const PhePublicKey& pk, const PhePrivateKey& sk,
                const Ciphertext& c);
/// Audit-path decryption from the reconstructed threshold exponent alone.
BigUint decrypt_with_exponent(const PhePublicKey& pk, const BigUint& d,
                              const Ciphertext& c);

Ciphertext add(const PhePublicKey& pk, const Ciphertext& a,
               const Ciphertext& b);

// ---------------------------------------------------------------------------
// Fixed-point codec for real-valued parameter vectors.

struct FixedPointCodec {
    std::uint32_t scale_bits = 16;  // S = 2^scale_bits
    double bound = 64.0;            // |v| <= bound

    double scale() const { return static_cast<double>(1ULL << scale_bits); }
    /// No-wraparound condition for summing `parties` encoded values.
    void check_headroom(std::uint32_t parties, const BigUint& n) const;
};

BigUint encode_scalar(double v, const FixedPointCodec& codec, const BigUint& n);
double decode_scalar(const BigUint& m, const FixedPointCodec& codec,
                     const BigUint& n);
std::vector<BigUint> encode_vector(std::span<const double> v,
                                   const FixedPointCodec& codec,
                                   const BigUint& n);
std::vector<double> decode_vector(std::span<const BigUint> m,
                                  const FixedPointCodec& codec,
                                  const BigUint& n);

// ---------------------------------------------------------------------------
// Threshold decryption from Shamir shares of the exponent d.
//
// Share holder i computes component = c^(w_i * s_i mod p) mod n^2, where w_i
// is the Lagrange coefficient at 0 for the participating index set, mod the
// share field prime p. The product of t components is c^(d + K*p) for some
// 0 <= K < t; the combiner strips c^(K*p) by trying each K and accepting the
// candidate that is congruent to 1 mod n (which c^d = (1+n)^m always is, and
// a wrong K is not, except with negligible probability).

struct PartialDecryption {
    std::uint32_t share_index = 0;
    BigUint component;
    Digest ciphertext_digest{};
};

PartialDecryption partial_decrypt(const PhePublicKey& pk,
                                  const SecretShare& share,
                                  std::span<const std::uint32_t> participants,
                                  const BigUint& share_field_prime,
                                  const Ciphertext& c);

BigUint combine_partials(const PhePublicKey& pk,
                         std::span<const PartialDecryption> parts,
                         const Ciphertext& c, const ShareConfig& cfg);

}  // namespace fedgan
